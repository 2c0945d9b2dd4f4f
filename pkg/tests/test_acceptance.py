"""Acceptance criteria, one test (and one summary line) each.

The supervised criteria (4, 5) train the shipped default qCNN and CNN
configurations.  Trained checkpoints are cached under ``.acceptance/`` (or
``$QTOPO_ACCEPTANCE_DIR``), keyed by configuration and data seeds, together
with the wall time the training took; delete the directory to retrain.
"""

import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from qtopo import datasets as D
from qtopo import eigen, pca, spins
from qtopo.chern import chern_number
from qtopo.qnn import (
    build, class_index, cross_entropy, default_config, load_checkpoint, save_checkpoint,
)
from qtopo.qnn.layers import LayerSpec, make_layer
from qtopo.qnn.train import evaluate, train, write_curve
from qtopo.quaternion import qmul_array

from conftest import ACCEPTANCE_LINES

TRAIN_SEED, TEST_SEED, PREDICT_SEED = 42, 43, 44
CACHE = Path(os.environ.get("QTOPO_ACCEPTANCE_DIR", Path(__file__).resolve().parents[1] / ".acceptance"))


def report(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


@pytest.fixture(scope="module")
def corpora():
    train_set, val_set = D.build_training(TRAIN_SEED)
    return {"train": train_set, "validation": val_set, "test": D.build_testing(TEST_SEED),
            "predict": D.build_prediction(PREDICT_SEED)}


def trained(arch, corpora):
    """Default-config network for ``arch``, trained once and cached."""
    cfg = default_config(arch)
    key = hashlib.sha256((cfg.to_text() + f"{TRAIN_SEED}").encode()).hexdigest()[:16]
    folder = CACHE / f"{arch}-{key}"
    info_path = folder / "info.json"
    if info_path.exists():
        return load_checkpoint(folder / "model.qnn"), json.loads(info_path.read_text())
    folder.mkdir(parents=True, exist_ok=True)
    tr, va = corpora["train"], corpora["validation"]
    start = time.process_time()
    net, records = train(cfg, tr.spins, tr.labels, va.spins, va.labels)
    info = {"cpu_seconds": time.process_time() - start, "epochs": cfg.epochs}
    save_checkpoint(net, folder / "model.qnn")
    write_curve(records, folder / "curve.csv")
    info_path.write_text(json.dumps(info, indent=2))
    return net, info


# ---------------------------------------------------------------------------


def test_criterion_1_phase_diagram():
    start = time.perf_counter()
    wrong, worst = [], 0.0
    for c in (1, 2, 3, 4):
        for m in (0.1, 0.5, 1.0, 1.9, 2.1, 3.0):
            for sign in (1, -1):
                res = chern_number(spins.texture(c, sign * m, 40))
                if res.value != spins.eq4_label(c, sign * m):
                    wrong.append((c, sign * m, res.value))
                if m in (1.0, 3.0):
                    worst = max(worst, res.residual)
    elapsed = time.perf_counter() - start
    ok = not wrong and worst < 1e-6 and elapsed < 10
    report(1, ok, f"48 (c, m) cases, {len(wrong)} wrong, max residual at |m| in {{1,3}} "
                  f"{worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_quaternion_map_properties():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    residues = []
    for _ in range(50):
        c = int(rng.integers(1, 4))
        m = float(rng.choice([-1, 1]) * rng.uniform(0.2, 3.5))
        if abs(abs(m) - 2) < 0.1:
            m += 0.3
        h = eigen.noisy_field(c, m, 0.2, rng)
        residues.append(eigen.f_map(h).residue)
    p1 = max(residues)
    p2 = max(np.max(np.abs(eigen.f_map_pure_spin(spins.texture(c, m)).values
                           - eigen.f_map_pure_spin(spins.texture(c, -m)).values))
             for c in (1, 2, 3) for m in (0.5, 1.0, 3.0))
    p3 = max(np.max(np.abs(eigen.f_map(h).values - eigen.spinor_correlation(h)))
             for h in (spins.h_grid(1, 1.0), spins.h_grid(2, -0.6),
                       eigen.noisy_field(3, 1.3, 0.1, rng)))
    p4 = max(np.max(np.abs(eigen.f_map(spins.h_grid(c, m)).values))
             for c in (1, 2, 3) for m in (2.1, -2.1, 3.0, -3.0, 5.0, -5.0))
    agree = 0.0
    for i in range(10):
        h = eigen.noisy_field(1 + i % 3, (-1) ** i * (0.5 + 0.3 * i), 0.1, rng)
        agree = max(agree, np.max(np.abs(eigen.f_map(h).values - eigen.f_map(h, direct=True).values)))
    elapsed = time.perf_counter() - start
    ok = p1 < 1e-9 and p2 < 1e-9 and p3 < 1e-9 and p4 < 1e-9 and agree < 1e-8 and elapsed < 120
    report(2, ok, f"P1 residue {p1:.1e}, P2 {p2:.1e}, P3 {p3:.1e}, P4 {p4:.1e}, "
                  f"FFT vs direct {agree:.1e}, {elapsed:.1f} s")


def test_criterion_3_pca_reproduction():
    start = time.perf_counter()
    expected = set(pca.RESEMBLING_PAIRS)
    notes, ok = [], True
    for sd in (0.0, 0.1, 0.2, 0.3):
        X, y = pca.as_matrix(pca.build_pca_dataset(sd, 42))
        model = pca.fit(X)
        two = pca.cluster_report(pca.project(model, X, 2), y)
        six = pca.cluster_report(pca.project(model, X, 6), y)
        pairs = two.confused_pairs()
        ok &= pairs == expected and six.accuracy == 1.0
        fmt = lambda s: "/".join("{" + ",".join(f"{v:+d}" for v in sorted(p)) + "}" for p in sorted(s, key=sorted))
        notes.append(f"sd={sd:g}: n=2 confused [{fmt(pairs) or 'none'}] groups [{fmt(two.groups(4))}], "
                     f"n=6 acc {six.accuracy:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    report(3, ok, "; ".join(notes) + f"; {elapsed:.0f} s")


def test_criterion_4_supervised(corpora):
    qnet, qinfo = trained("qcnn", corpora)
    cnet, cinfo = trained("cnn", corpora)
    te = corpora["test"]
    qacc = evaluate(qnet, te.spins, te.labels).accuracy
    cacc = evaluate(cnet, te.spins, te.labels).accuracy
    qp, cp = qnet.param_count(), cnet.param_count()
    cpu = qinfo["cpu_seconds"] + cinfo["cpu_seconds"]
    ok = (qacc >= 0.95 and qp < cp and abs(qp - 19350) <= 0.2 * 19350
          and abs(cp - 24252) <= 0.2 * 24252 and cpu <= 7200)
    report(4, ok, f"qCNN test acc {qacc:.4f} ({qp} params), CNN test acc {cacc:.4f} ({cp} params), "
                  f"training CPU {cpu / 60:.1f} min")


def test_criterion_5_prediction(corpora):
    qnet, _ = trained("qcnn", corpora)
    cnet, _ = trained("cnn", corpora)
    acc = {}
    for name, ds in corpora["predict"].items():
        acc[name] = (evaluate(qnet, ds.spins, ds.labels).accuracy,
                     evaluate(cnet, ds.spins, ds.labels).accuracy)
    ok = all(acc[k][0] >= 0.90 for k in ("flip_z", "swap_yz", "helical", "conical", "fm"))
    ok &= acc["chern"][0] >= 0.85
    ok &= all(acc[k][0] >= acc[k][1] for k in ("fm", "helical", "conical"))
    report(5, ok, ", ".join(f"{k} q={a:.3f}/c={b:.3f}" for k, (a, b) in acc.items()))


def test_criterion_6_engine():
    rng = np.random.default_rng(6)
    worst, kinds = 0.0, set()
    for arch in ("qcnn", "cnn"):
        net = build(default_config(arch, dropout=0.0))
        v = rng.normal(size=(2, 40, 40, 3))
        x = net.encode(v / np.linalg.norm(v, axis=-1, keepdims=True))
        labels = np.array([class_index(1), class_index(-3)])
        net.loss_and_grads(x, labels)
        for i, name, p in net.parameters():
            kinds.add(net.layers[i].spec.kind)
            g = net.layers[i].grads[name]
            for _ in range(5):
                idx = tuple(rng.integers(0, s) for s in p.shape)
                old = p[idx]
                p[idx] = old + 1e-5
                lp = cross_entropy(net.forward(x), labels)
                p[idx] = old - 1e-5
                lm = cross_entropy(net.forward(x), labels)
                p[idx] = old
                fd = (lp - lm) / 2e-5
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    lay = make_layer(LayerSpec("qconv", kernel=(1, 1), cin=1, cout=1))
    qerr = 0.0
    for _ in range(1000):
        k = rng.normal(size=4)
        q = rng.normal(size=4)
        lay.params = {"W": k.reshape(4, 1, 1, 1, 1), "b": np.zeros((4, 1))}
        out = lay.forward(q.reshape(1, 4, 1, 1, 1))[0, :, 0, 0, 0]
        qerr = max(qerr, np.max(np.abs(out - qmul_array(q, k))))
    toy = D.build_prediction(5)
    xs = np.concatenate([toy["chern"].spins[:24], toy["flip_z"].spins[:24]])
    ys = np.concatenate([toy["chern"].labels[:24], toy["flip_z"].labels[:24]])
    cfg = default_config("qcnn", epochs=2, batch_size=16)
    curves = []
    for _ in range(2):
        _, rec = train(cfg, xs, ys, xs[:8], ys[:8])
        curves.append([tuple(r.__dict__.values()) for r in rec])
    same = curves[0] == curves[1]
    ok = worst < 1e-4 and qerr < 1e-12 and same
    report(6, ok, f"gradient rel err {worst:.1e} over {sorted(kinds)}, qconv 1x1 vs Hamilton "
                  f"{qerr:.1e} (1000 cases), seeded runs identical: {same}")


def test_criterion_7_data_integrity(corpora, tmp_path):
    tr, va, te, pr = corpora["train"], corpora["validation"], corpora["test"], corpora["predict"]
    vortex = np.isin(np.concatenate([tr.family, va.family]),
                     [spins.Family.VORTEX_YZ, spins.Family.VORTEX_XZ, spins.Family.VORTEX_XY]).sum()
    counts_ok = (len(tr) + len(va) == 6120 and vortex == 360 and len(va) == 1530
                 and len(te) == 1224 and len(pr["chern"]) == 120)
    round_trip = True
    for ds in (va, te, *pr.values()):
        D.save(ds, tmp_path / "a.qds")
        D.save(D.load(tmp_path / "a.qds"), tmp_path / "b.qds")
        round_trip &= (tmp_path / "a.qds").read_bytes() == (tmp_path / "b.qds").read_bytes()
    mismatches = sum(len(D.verify_labels(ds)) for ds in (tr, va, te, *pr.values()))
    ok = counts_ok and round_trip and mismatches == 0
    report(7, ok, f"train+val {len(tr) + len(va)} ({vortex} vortices), validation {len(va)}, "
                  f"test {len(te)}, prediction chern {len(pr['chern'])}; byte-identical "
                  f"round trips: {round_trip}; oracle label mismatches: {mismatches}")
