"""Labeled spin-texture corpora and their binary container.

Training (per c = 1..4): 640 samples with m ~ U[-1.9, -0.1], 640 with
m ~ U[0.1, 1.9], 80 at m = -3 and 80 at m = 3, plus 30 planar vortices per
(c, plane) with m ~ U[-3, 3].  Every sample gets a random translation and a
random global rotation; all but the vortices also get site noise.  The test
set has the same composition at one fifth of the size.  The prediction set
has six categories that see translation and rotation only.

Container layout (little-endian)::

    "QDS1" | u32 version | u32 count | u32 L | u32 layout (0 = spin3)
    per sample: i8 class index | u8 family | f64 c | f64 m | u64 seed
                | L*L*3 f32 spins, row-major, (nx, ny, nz) per site
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as seeds
from . import spins
from .chern import chern_number
from .errors import ConsistencyError, FormatError, IllConditionedError
from .spins import Family, SpinTexture

MAGIC = b"QDS1"
VERSION = 1
LAYOUT_SPIN3 = 0
HEADER = struct.Struct("<4s4I")

# samples per c in the training set; the test set uses 1/5 of each
CHERN_BLOCKS = (("S1", 640), ("S2", 640), ("S3", 80), ("S4", 80))
VORTICES_PER_PLANE = 30
TEST_FRACTION = 5
VALIDATION_SHARE = 0.25
BOUNDARY_MARGIN = 0.05
PREDICTION_CATEGORIES = ("chern", "flip_z", "swap_yz", "helical", "conical", "fm")
PREDICTION_SIZE = 120


def record_dtype(L: int) -> np.dtype:
    return np.dtype([("label", "i1"), ("family", "u1"), ("c", "<f8"), ("m", "<f8"),
                     ("seed", "<u8"), ("spins", "<f4", (L, L, 3))])


@dataclass
class Dataset:
    """Column-wise sample store; ``labels`` hold Chern numbers (-4..4)."""

    spins: np.ndarray  # (N, L, L, 3) float32
    labels: np.ndarray  # (N,) int
    family: np.ndarray  # (N,) uint8
    c: np.ndarray
    m: np.ndarray
    seeds: np.ndarray  # (N,) uint64
    ill_conditioned: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ill_conditioned is None:
            self.ill_conditioned = np.zeros(len(self.labels), dtype=bool)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def L(self) -> int:
        return self.spins.shape[1]

    def subset(self, idx, name=None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.spins[idx], self.labels[idx], self.family[idx], self.c[idx],
                       self.m[idx], self.seeds[idx], self.ill_conditioned[idx],
                       name or self.name, dict(self.meta))

    def class_counts(self) -> dict[int, int]:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(n) for v, n in zip(vals, counts)}

    def texture(self, i: int) -> SpinTexture:
        return SpinTexture(self.spins[i].astype(np.float64), Family(int(self.family[i])),
                           c=int(self.c[i]), m=float(self.m[i]), label=int(self.labels[i]),
                           augmentation={"seed": int(self.seeds[i])},
                           ill_conditioned=bool(self.ill_conditioned[i]))


def from_textures(textures: list[SpinTexture], name: str = "") -> Dataset:
    if not textures:
        raise ValueError("no textures")
    return Dataset(
        spins=np.stack([t.data for t in textures]).astype(np.float32),
        labels=np.array([t.label for t in textures], dtype=np.int64),
        family=np.array([int(t.family) for t in textures], dtype=np.uint8),
        c=np.array([t.c for t in textures], dtype=np.float64),
        m=np.array([t.m for t in textures], dtype=np.float64),
        seeds=np.array([t.augmentation.get("seed", 0) for t in textures], dtype=np.uint64),
        ill_conditioned=np.array([t.ill_conditioned for t in textures], dtype=bool),
        name=name,
    )


# ---------------------------------------------------------------------------
# recipes


def _store(t: SpinTexture, oracle_label: bool = False) -> SpinTexture:
    """Round spins to float32 and check (or set) the label on the stored values."""
    t = t.copy(data=t.data.astype(np.float32).astype(np.float64))
    try:
        value, ill = chern_number(t.data).value, False
    except IllConditionedError as exc:
        value, ill = exc.value, True
    if oracle_label:
        t.label, t.ill_conditioned = value, ill or t.ill_conditioned
    elif ill or value != t.label:
        raise ConsistencyError(
            f"stored texture (family {t.family.name}, c={t.c}, m={t.m:.6g}, "
            f"seed {t.augmentation.get('seed')}) has oracle label {value}, expected {t.label}")
    return t


def _chern_sample(job) -> SpinTexture:
    master, tag, index, c, block, L = job
    seed = seeds.sample_seed(master, tag, index)
    gen = seeds.generator(seed, seeds.SUB_PARAMS)
    m = {"S1": lambda: gen.uniform(-1.9, -0.1), "S2": lambda: gen.uniform(0.1, 1.9),
         "S3": lambda: -3.0, "S4": lambda: 3.0}[block]()
    t = spins.texture(c, float(m), L)
    return _store(spins.augment(t, seed))


def _vortex_sample(job) -> SpinTexture:
    master, tag, index, c, plane, L = job
    seed = seeds.sample_seed(master, tag, index)
    m = float(seeds.generator(seed, seeds.SUB_PARAMS).uniform(-3.0, 3.0))
    t = spins.vortex_texture(plane, c, m, L)
    return _store(spins.augment(t, seed, noise=False))


def _run(fn, jobs, threads: int = 1) -> list:
    if threads <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def _supervised(master: int, tag: int, scale: int, L: int, threads: int) -> list[SpinTexture]:
    chern_jobs, vortex_jobs = [], []
    index = 0
    for c in (1, 2, 3, 4):
        for block, n in CHERN_BLOCKS:
            for _ in range(n // scale):
                chern_jobs.append((master, tag, index, c, block, L))
                index += 1
    for c in (1, 2, 3, 4):
        for plane in spins.VORTEX_PLANES:
            for _ in range(VORTICES_PER_PLANE // scale):
                vortex_jobs.append((master, tag, index, c, plane, L))
                index += 1
    return _run(_chern_sample, chern_jobs, threads) + _run(_vortex_sample, vortex_jobs, threads)


def stratified_split(labels, share: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (keep, held_out) with round(share * n_class) held out per class."""
    labels = np.asarray(labels)
    held = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = seeds.generator(seed, seeds.SPLIT, int(cls) + 4).permutation(idx)
        held.append(perm[:int(round(share * len(idx)))])
    held = np.sort(np.concatenate(held))
    keep = np.setdiff1d(np.arange(len(labels)), held)
    return keep, held


def build_training(seed: int, L: int = spins.DEFAULT_L, threads: int = 1) -> tuple[Dataset, Dataset]:
    full = from_textures(_supervised(seed, seeds.TRAIN, 1, L, threads), "train")
    keep, held = stratified_split(full.labels, VALIDATION_SHARE, seed)
    train, val = full.subset(keep, "train"), full.subset(held, "validation")
    for ds in (train, val):
        ds.meta.update(master_seed=seed, recipe="training")
    return train, val


def build_testing(seed: int, L: int = spins.DEFAULT_L, threads: int = 1) -> Dataset:
    ds = from_textures(_supervised(seed, seeds.TEST, TEST_FRACTION, L, threads), "test")
    ds.meta.update(master_seed=seed, recipe="testing")
    return ds


def chern_category_m(i: int) -> float:
    return -3.0 + 6.0 * i / 29.0


def near_boundary(m: float, margin: float = BOUNDARY_MARGIN) -> bool:
    return min(abs(m), abs(abs(m) - 2.0)) < margin


def _prediction_sample(job) -> SpinTexture:
    master, category, index, L = job
    offset = PREDICTION_CATEGORIES.index(category) * 100_000
    seed = seeds.sample_seed(master, seeds.PREDICT, offset + index)
    gen = seeds.generator(seed, seeds.SUB_PARAMS)
    if category == "chern":
        c, i = divmod(index, 30)
        m = chern_category_m(i)
        t = spins.texture(c + 1, m, L)
        t.ill_conditioned = near_boundary(m)
    elif category in ("flip_z", "swap_yz"):
        c, rest = divmod(index, 30)
        m = 1.0 if rest < 15 else -1.0
        base = spins.texture(c + 1, m, L)
        t = spins.flip_z(base) if category == "flip_z" else spins.swap_yz(base)
    elif category == "helical":
        t = spins.helical_conical(0.0, L)
    elif category == "conical":
        eps = 0.0
        while eps == 0.0:
            eps = float(gen.uniform(-1.0, 1.0))
        t = spins.helical_conical(eps, L)
    elif category == "fm":
        t = spins.fm_texture(int(gen.choice([-1, 1])), L)
    else:
        raise ValueError(f"unknown prediction category {category!r}")
    return _store(spins.augment(t, seed, noise=False), oracle_label=True)


def build_prediction(seed: int, L: int = spins.DEFAULT_L, threads: int = 1) -> dict[str, Dataset]:
    """The six out-of-distribution categories, 120 samples each, labels from the oracle."""
    out = {}
    for cat in PREDICTION_CATEGORIES:
        jobs = [(seed, cat, i, L) for i in range(PREDICTION_SIZE)]
        ds = from_textures(_run(_prediction_sample, jobs, threads), cat)
        ds.meta.update(master_seed=seed, recipe="prediction", category=cat)
        out[cat] = ds
    return out


# ---------------------------------------------------------------------------
# container


def to_bytes(ds: Dataset) -> bytes:
    L = ds.L
    rec = np.zeros(len(ds), dtype=record_dtype(L))
    rec["label"] = ds.labels + 4
    rec["family"] = ds.family
    rec["c"] = ds.c
    rec["m"] = ds.m
    rec["seed"] = ds.seeds
    rec["spins"] = ds.spins
    return HEADER.pack(MAGIC, VERSION, len(ds), L, LAYOUT_SPIN3) + rec.tobytes()


def save(ds: Dataset, path) -> None:
    if not np.all(np.isfinite(ds.spins)) or not np.all(np.isfinite(ds.m)):
        raise ConsistencyError(f"dataset {ds.name!r} contains non-finite values")
    Path(path).write_bytes(to_bytes(ds))


def from_bytes(data: bytes, name: str = "") -> Dataset:
    if len(data) < HEADER.size:
        raise FormatError(f"file too short for a header ({len(data)} bytes)", len(data))
    magic, version, count, L, layout = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if L == 0 or L % 2:
        raise FormatError(f"grid size L={L} must be positive and even", 12)
    if layout != LAYOUT_SPIN3:
        raise FormatError(f"unknown layout tag {layout}", 16)
    dt = record_dtype(L)
    need = HEADER.size + count * dt.itemsize
    if len(data) < need:
        complete = (len(data) - HEADER.size) // dt.itemsize
        raise FormatError(f"truncated: {complete} of {count} records present",
                          HEADER.size + complete * dt.itemsize)
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after {count} records", need)
    rec = np.frombuffer(data, dtype=dt, count=count, offset=HEADER.size)
    for col, ok in (("label", (rec["label"] >= 0) & (rec["label"] <= 8)),
                    ("family", rec["family"] <= max(Family)),
                    ("m", np.isfinite(rec["m"])),
                    ("spins", np.isfinite(rec["spins"]).reshape(count, L * L * 3).all(axis=1))):
        bad = np.flatnonzero(~ok)
        if bad.size:
            at = HEADER.size + int(bad[0]) * dt.itemsize + dt.fields[col][1]
            raise FormatError(f"invalid {col} in record {int(bad[0])}", at)
    return Dataset(
        spins=rec["spins"].copy(),
        labels=rec["label"].astype(np.int64) - 4,
        family=rec["family"].copy(),
        c=rec["c"].copy(),
        m=rec["m"].copy(),
        seeds=rec["seed"].copy(),
        name=name,
    )


def load(path) -> Dataset:
    path = Path(path)
    return from_bytes(path.read_bytes(), path.stem)


def manifest(datasets: dict[str, Dataset], **extra) -> dict:
    out = {"format": MAGIC.decode(), "version": VERSION, "datasets": {}}
    out.update(extra)
    for fname, ds in datasets.items():
        out["datasets"][fname] = {
            "name": ds.name,
            "count": len(ds),
            "L": ds.L,
            "class_counts": {str(k): v for k, v in ds.class_counts().items()},
            "family_counts": {Family(int(f)).name: int(n)
                              for f, n in zip(*np.unique(ds.family, return_counts=True))},
            "ill_conditioned": [int(i) for i in np.flatnonzero(ds.ill_conditioned)],
            **{k: v for k, v in ds.meta.items()},
        }
    return out


def write_manifest(path, datasets: dict[str, Dataset], **extra) -> None:
    Path(path).write_text(json.dumps(manifest(datasets, **extra), indent=2, sort_keys=True) + "\n")


def verify_labels(ds: Dataset) -> list[int]:
    """Indices whose stored label differs from the oracle on the stored spins."""
    bad = []
    for i in range(len(ds)):
        try:
            value = chern_number(ds.spins[i].astype(np.float64)).value
        except IllConditionedError as exc:
            value = exc.value
        if value != ds.labels[i]:
            bad.append(i)
    return bad
