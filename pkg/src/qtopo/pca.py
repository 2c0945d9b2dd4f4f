"""Principal component analysis of F(p) maps and nearest-centroid diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as seeds
from . import spins
from .eigen import FMap, f_map, noisy_field

PHASES = (1, -1, 2, -2, 3, -3)
PER_PHASE = 30
TRIVIAL_PER_POINT = 5
# classes expected to overlap in the leading two components (C mod 4)
RESEMBLING_PAIRS = (frozenset({1, -3}), frozenset({-1, 3}), frozenset({2, -2}))


def pca_recipe() -> list[tuple[int, float, int]]:
    """(c, m, label) for each of the 210 samples, in storage order."""
    out = []
    for C in PHASES:
        out += [(abs(C), float(np.sign(C)), C)] * PER_PHASE
    for c in (1, 2, 3):
        for m in (-3.0, 3.0):
            out += [(c, m, 0)] * TRIVIAL_PER_POINT
    return out


def build_pca_dataset(sd: float, seed: int, L: int = spins.DEFAULT_L) -> list[tuple[FMap, int]]:
    """F maps of noisy order-c models: 30 per nontrivial phase, 30 trivial.

    Every component of h at every site gets independent N(0, sd^2) noise,
    drawn from the sample's own stream.
    """
    out = []
    for i, (c, m, label) in enumerate(pca_recipe()):
        sample_seed = seeds.sample_seed(seed, seeds.PCA, i)
        h = noisy_field(c, m, sd, seeds.generator(sample_seed, seeds.SUB_PARAMS), L)
        out.append((f_map(h, meta={"sd": sd, "seed": sample_seed, "index": i}), label))
    return out


def as_matrix(samples) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([f.values.ravel() for f, _ in samples])
    y = np.array([label for _, label in samples])
    return X, y


@dataclass
class PCAModel:
    mean: np.ndarray  # (features,)
    axes: np.ndarray  # (k, features), orthonormal rows
    values: np.ndarray  # (k,) descending variances
    meta: dict = field(default_factory=lambda: {
        "centering": "mean only, no per-feature scaling",
        "covariance": "1/(N-1)",
        "signs": "largest-magnitude entry of each axis positive",
    })

    @property
    def n_components(self) -> int:
        return len(self.values)

    def explained(self) -> np.ndarray:
        """Principal values normalized by the largest one."""
        top = self.values[0] if len(self.values) and self.values[0] > 0 else 1.0
        return self.values / top


def fit(X) -> PCAModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("fit needs a 2-D sample matrix with at least two rows")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    values = s * s / (X.shape[0] - 1)
    pivot = np.argmax(np.abs(vt), axis=1)
    vt *= np.sign(vt[np.arange(len(vt)), pivot])[:, None]
    return PCAModel(mean, vt, values)


def project(model: PCAModel, sample, n: int) -> np.ndarray:
    """Centered coordinates on the first ``n`` axes; ``sample`` may be one row or many."""
    if n > model.n_components:
        raise ValueError(f"requested {n} components, model has {model.n_components}")
    return (np.asarray(sample, dtype=float) - model.mean) @ model.axes[:n].T


def reconstruct(model: PCAModel, coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[-1]
    return coords @ model.axes[:n] + model.mean


@dataclass
class ClusterReport:
    classes: np.ndarray
    centroids: np.ndarray  # (k, n)
    within: np.ndarray  # mean distance of each class to its own centroid
    between: np.ndarray  # (k, k) centroid distances
    confusion: np.ndarray  # rows true class, columns nearest centroid
    predictions: np.ndarray

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    def confused_pairs(self) -> set[frozenset]:
        """Unordered class pairs with any misassignment in either direction."""
        i, j = np.nonzero(self.confusion - np.diag(np.diag(self.confusion)))
        return {frozenset({int(self.classes[a]), int(self.classes[b])}) for a, b in zip(i, j)}

    def groups(self, k: int) -> list[frozenset]:
        """Single-linkage grouping of the class centroids into ``k`` clusters."""
        clusters = [{int(c)} for c in self.classes]
        pos = {int(c): i for i, c in enumerate(self.classes)}

        def dist(a, b):
            return min(self.between[pos[x], pos[y]] for x in a for y in b)

        while len(clusters) > k:
            pairs = [(dist(a, b), i, j) for i, a in enumerate(clusters)
                     for j, b in enumerate(clusters) if i < j]
            _, i, j = min(pairs)
            clusters[i] |= clusters.pop(j)
        return sorted((frozenset(c) for c in clusters), key=lambda s: sorted(s))


def cluster_report(projections, labels) -> ClusterReport:
    P = np.asarray(projections, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    centroids = np.stack([P[y == c].mean(axis=0) for c in classes])
    within = np.array([np.linalg.norm(P[y == c] - centroids[i], axis=1).mean()
                       for i, c in enumerate(classes)])
    between = np.linalg.norm(centroids[:, None] - centroids[None], axis=-1)
    d2 = ((P[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    pred = classes[np.argmin(d2, axis=1)]
    index = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y, pred):
        conf[index[t], index[p]] += 1
    return ClusterReport(classes, centroids, within, between, conf, pred)


# ---------------------------------------------------------------------------
# CSV output


def write_spectrum(model: PCAModel, path, count: int = 16) -> None:
    rel = model.explained()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lambda", "lambda_over_lambda1"])
        for i in range(min(count, model.n_components)):
            w.writerow([i + 1, repr(float(model.values[i])), repr(float(rel[i]))])


def write_projections(projections, labels, path) -> None:
    P = np.asarray(projections)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "label"] + [f"PC{i + 1}" for i in range(P.shape[1])])
        for i, (row, lab) in enumerate(zip(P, labels)):
            w.writerow([i, int(lab)] + [repr(float(v)) for v in row])


def write_confusion(report: ClusterReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\predicted"] + [int(c) for c in report.classes])
        for c, row in zip(report.classes, report.confusion):
            w.writerow([int(c)] + [int(v) for v in row])


def write_fmaps(samples, path) -> None:
    """One row per map: label, c, m, then the L*L values of F row-major."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for fmap, label in samples:
            w.writerow([int(label), fmap.meta.get("c"), fmap.meta.get("m")]
                       + [repr(float(v)) for v in fmap.values.ravel()])
