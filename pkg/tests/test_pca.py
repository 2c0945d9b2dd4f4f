import numpy as np
import pytest

from qtopo import pca


@pytest.fixture(scope="module")
def clean():
    return pca.build_pca_dataset(0.0, 42)


def test_recipe_counts():
    labels = [label for _, _, label in pca.pca_recipe()]
    assert len(labels) == 210
    assert {C: labels.count(C) for C in set(labels)} == {C: 30 for C in (0, 1, -1, 2, -2, 3, -3)}


def test_clean_dataset(clean):
    assert len(clean) == 210
    trivial = [f for f, label in clean if label == 0]
    assert len(trivial) == 30
    assert all(np.max(np.abs(f.values)) < 1e-9 for f in trivial)


def test_noisy_dataset_gaps_open():
    samples = pca.build_pca_dataset(0.3, 1)
    assert len(samples) == 210
    assert all(f.residue < 1e-9 for f, _ in samples)


def test_identical_rows_rank_zero():
    model = pca.fit(np.ones((5, 7)))
    assert np.all(model.values == 0.0)


def test_anisotropic_gaussian(rng):
    theta = np.deg2rad(30)
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    X = rng.normal(size=(20000, 2)) * [5.0, 1.0] @ R.T
    model = pca.fit(X)
    axis = model.axes[0]
    angle = np.degrees(np.arccos(abs(axis @ [np.cos(theta), np.sin(theta)])))
    assert angle < 1.0
    assert model.values[0] > model.values[1] >= 0


def test_fit_invariants(rng):
    X = rng.normal(size=(30, 12)) @ rng.normal(size=(12, 12))
    model = pca.fit(X)
    assert np.allclose(model.axes @ model.axes.T, np.eye(len(model.axes)), atol=1e-10)
    assert np.all(np.diff(model.values) <= 1e-12) and np.all(model.values >= 0)
    pivots = model.axes[np.arange(len(model.axes)), np.argmax(np.abs(model.axes), axis=1)]
    assert np.all(pivots > 0)
    P = pca.project(model, X, model.n_components)
    assert np.allclose(pca.reconstruct(model, P), X, atol=1e-8)
    cov = np.cov(P.T)
    assert np.allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-8)
    assert np.allclose(np.diag(cov), model.values)
    assert np.allclose(pca.project(model, model.mean, 3), 0.0)
    with pytest.raises(ValueError):
        pca.project(model, X, model.n_components + 1)


def test_cluster_report_separated_blobs(rng):
    centers = np.array([[0, 0], [10, 0], [0, 10]])
    y = np.repeat([0, 1, 2], 20)
    P = centers[y] + rng.normal(scale=0.5, size=(60, 2))
    rep = pca.cluster_report(P, y)
    assert np.array_equal(rep.confusion, np.diag([20, 20, 20]))
    assert rep.accuracy == 1.0 and rep.confused_pairs() == set()
    assert np.all(rep.within < 2) and rep.between[0, 1] > 9


def test_spectrum_decays(clean):
    X, _ = pca.as_matrix(clean)
    model = pca.fit(X)
    rel = model.explained()
    assert rel[0] == 1.0 and rel[6] < 1e-6


def test_two_components_group_resembling_classes(clean):
    X, y = pca.as_matrix(clean)
    rep = pca.cluster_report(pca.project(pca.fit(X), X, 2), y)
    groups = set(rep.groups(4))
    assert groups == set(pca.RESEMBLING_PAIRS) | {frozenset({0})}


def test_six_components_separate_clean(clean):
    X, y = pca.as_matrix(clean)
    rep = pca.cluster_report(pca.project(pca.fit(X), X, 6), y)
    assert rep.accuracy == 1.0


def test_csv_outputs(tmp_path, clean):
    X, y = pca.as_matrix(clean)
    model = pca.fit(X)
    P = pca.project(model, X, 2)
    rep = pca.cluster_report(P, y)
    pca.write_spectrum(model, tmp_path / "s.csv")
    pca.write_projections(P, y, tmp_path / "p.csv")
    pca.write_confusion(rep, tmp_path / "c.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 17
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "sample,label,PC1,PC2"
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert len(rows) == 8
