import numpy as np
import pytest

from qtopo import datasets as D
from qtopo.cli import main
from qtopo.qnn import build, default_config, save_checkpoint


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_chern_examples(capsys):
    code, out, _ = run(capsys, "chern", "--c", "1", "--m", "1")
    assert code == 0 and out.startswith("chern=1 ")
    code, out, _ = run(capsys, "chern", "--c", "2", "--m", "3")
    assert code == 0 and out.startswith("chern=0 ") and "min_gap=2" in out
    code, _, err = run(capsys, "chern", "--c", "1", "--m", "2")
    assert code == 4 and "GapClosed" in err


def test_chern_usage(capsys):
    assert run(capsys, "chern", "--c", "1")[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["chern", "--c", "x"])
    assert info.value.code == 2


def test_fmap_flat_pgm(tmp_path, capsys):
    code, out, _ = run(capsys, "fmap", "--c", "1", "--m", "3", "--out", str(tmp_path / "f"))
    assert code == 0
    raw = (tmp_path / "f.pgm").read_bytes()
    assert set(raw[-1600:]) == {128}
    assert np.loadtxt(tmp_path / "f.csv", delimiter=",").shape == (40, 40)


def test_pca_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "pca", "--sd", "0", "--components", "6", "--out", str(tmp_path))
    assert code == 0 and "accuracy=1.0000" in out
    for name in ("spectrum.csv", "projections.csv", "confusion.csv", "metadata.txt"):
        assert (tmp_path / name).exists()
    assert len((tmp_path / "projections.csv").read_text().splitlines()) == 211
    assert "mean only" in (tmp_path / "metadata.txt").read_text()


def test_gen_predict_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "gen", "predict", "--seed", "5", "--out", str(a))[0] == 0
    assert run(capsys, "--threads", "1", "gen", "predict", "--seed", "5", "--out", str(b))[0] == 0
    for f in a.glob("*.qds"):
        assert f.read_bytes() == (b / f.name).read_bytes()
    assert (a / "manifest_predict.json").exists()


def test_gen_pca(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "pca", "--sd", "0.2", "--out", str(tmp_path))
    assert code == 0 and "210" in out
    assert len((tmp_path / "pca_sd0.2.csv").read_text().splitlines()) == 210


def test_threads_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("QTOPO_THREADS", "many")
    assert run(capsys, "gen", "predict", "--out", str(tmp_path))[0] == 2


def small_data(tmp_path, L=8, n=12):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(n, L, L, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    ds = D.Dataset(v.astype(np.float32), np.arange(n) % 9 - 4, np.zeros(n, np.uint8),
                   np.ones(n), np.ones(n), np.arange(n, dtype=np.uint64))
    for name in ("train", "validation", "test"):
        D.save(ds, tmp_path / f"{name}.qds")
    return ds


def test_train_and_eval(tmp_path, capsys, monkeypatch):
    small_data(tmp_path)
    import qtopo.qnn as qnn

    small = dict(L=8, stage_kernels=(2, 2, 2), widths=(4, 4, 4))
    orig = qnn.default_config
    monkeypatch.setattr(qnn, "default_config", lambda arch, **kw: orig(arch, **{**kw, **small}))
    code, out, _ = run(capsys, "train", "--arch", "qcnn", "--epochs", "2", "--data", str(tmp_path),
                       "--out", str(tmp_path / "m"))
    assert code == 0 and "params=" in out and "test_acc=" in out
    curve = (tmp_path / "m" / "curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,train_loss,train_acc,val_loss,val_acc" and len(curve) == 3
    code, out, _ = run(capsys, "eval", "--model", str(tmp_path / "m" / "model.qnn"),
                       "--data", str(tmp_path / "test.qds"))
    assert code == 0 and out.splitlines()[0].startswith("dataset,count,accuracy")


def test_eval_errors(tmp_path, capsys):
    net = build(default_config("cnn", L=8, stage_kernels=(2, 2, 2)))
    save_checkpoint(net, tmp_path / "m.qnn")
    empty = D.Dataset(np.zeros((0, 8, 8, 3), np.float32), np.zeros(0, int), np.zeros(0, np.uint8),
                      np.zeros(0), np.zeros(0), np.zeros(0, np.uint64))
    D.save(empty, tmp_path / "empty.qds")
    assert run(capsys, "eval", "--model", str(tmp_path / "m.qnn"), "--data", str(tmp_path / "empty.qds"))[0] == 2
    (tmp_path / "junk.qds").write_bytes(b"nope")
    assert run(capsys, "eval", "--model", str(tmp_path / "m.qnn"), "--data", str(tmp_path / "junk.qds"))[0] == 3
    assert run(capsys, "eval", "--model", str(tmp_path / "missing.qnn"), "--data", str(tmp_path))[0] == 3
