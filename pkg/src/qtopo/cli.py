"""Command-line entry point: ``qtopo <command> ...``.

Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets, eigen, pca, spins
from . import rng as seeds
from .chern import chern_number, min_gap
from .errors import (
    ConfigurationError, ConsistencyError, DegenerateTripleError, DomainError, FormatError,
    GapClosedError, IllConditionedError, NumericalFailureError,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("qtopo")


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("QTOPO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"QTOPO_THREADS must be an integer, got {env!r}") from None
    return 1


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    out = _outdir(args.out)
    threads = _threads(args)
    if args.kind == "train":
        train, val = datasets.build_training(args.seed, args.L, threads)
        files = {"train.qds": train, "validation.qds": val}
    elif args.kind == "test":
        files = {"test.qds": datasets.build_testing(args.seed, args.L, threads)}
    elif args.kind == "predict":
        files = {f"predict_{k}.qds": v
                 for k, v in datasets.build_prediction(args.seed, args.L, threads).items()}
    else:
        samples = pca.build_pca_dataset(args.sd, args.seed, args.L)
        name = f"pca_sd{args.sd:g}.csv"
        pca.write_fmaps(samples, out / name)
        counts = {}
        for _, label in samples:
            counts[str(label)] = counts.get(str(label), 0) + 1
        datasets.write_manifest(out / "manifest_pca.json", {}, kind="pca", seed=args.seed,
                                sd=args.sd, file=name, count=len(samples), class_counts=counts)
        print(f"wrote {len(samples)} F maps to {out / name}")
        return EXIT_OK
    for name, ds in files.items():
        datasets.save(ds, out / name)
        print(f"wrote {len(ds)} samples to {out / name}")
    datasets.write_manifest(out / f"manifest_{args.kind}.json", files, kind=args.kind, seed=args.seed)
    return EXIT_OK


# ---------------------------------------------------------------------------
# chern


def cmd_chern(args) -> int:
    if args.path is None and (args.c is None or args.m is None):
        raise UsageError("give a dataset path or both --c and --m")
    if args.path is None:
        h = spins.h_grid(args.c, args.m, args.L)
        gap = min_gap(h)
        res = chern_number(spins.normalize(h.data))
        print(f"chern={res.value} residual={res.residual:.3e} min_gap={gap:.6g}")
        return EXIT_OK
    ds = datasets.load(args.path)
    status = EXIT_OK
    print("index,label,chern,residual,ill_conditioned")
    for i in range(len(ds)):
        try:
            res = chern_number(ds.spins[i].astype(np.float64))
            print(f"{i},{ds.labels[i]},{res.value},{res.residual:.3e},0")
        except IllConditionedError as exc:
            print(f"{i},{ds.labels[i]},{exc.value},{exc.residual:.3e},1")
            status = EXIT_NUMERIC
    return status


# ---------------------------------------------------------------------------
# fmap / pca


def cmd_fmap(args) -> int:
    gen = seeds.generator(args.seed, seeds.PCA)
    h = eigen.noisy_field(args.c, args.m, args.sd, gen, args.L)
    fmap = eigen.f_map(h)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    eigen.write_csv(fmap, prefix.with_suffix(".csv"))
    eigen.write_pgm(fmap, prefix.with_suffix(".pgm"))
    print(f"max|F|={np.max(np.abs(fmap.values)):.6g} residue={fmap.residue:.3e} "
          f"-> {prefix.with_suffix('.csv')}, {prefix.with_suffix('.pgm')}")
    return EXIT_OK


def cmd_pca(args) -> int:
    out = _outdir(args.out)
    samples = pca.build_pca_dataset(args.sd, args.seed, args.L)
    X, y = pca.as_matrix(samples)
    model = pca.fit(X)
    P = pca.project(model, X, args.components)
    report = pca.cluster_report(P, y)
    pca.write_spectrum(model, out / "spectrum.csv")
    pca.write_projections(P, y, out / "projections.csv")
    pca.write_confusion(report, out / "confusion.csv")
    with open(out / "metadata.txt", "w") as fh:
        for k, v in model.meta.items():
            fh.write(f"{k}={v}\n")
        fh.write(f"sd={args.sd}\nseed={args.seed}\ncomponents={args.components}\n")
    pairs = sorted(sorted(p) for p in report.confused_pairs())
    groups = sorted(sorted(g) for g in report.groups(4))
    print(f"components={args.components} accuracy={report.accuracy:.4f} "
          f"confused_pairs={pairs} centroid_groups={groups}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / eval


def _load_required(path: Path) -> datasets.Dataset:
    if not path.exists():
        raise FileNotFoundError(f"missing dataset {path}")
    return datasets.load(path)


def cmd_train(args) -> int:
    from .qnn import default_config, save_checkpoint
    from .qnn.train import evaluate, train, write_curve

    data = Path(args.data)
    tr = _load_required(data / "train.qds")
    va = _load_required(data / "validation.qds")
    overrides = {"activation": args.activation, "seed": args.seed, "L": tr.L}
    for key in ("epochs", "batch_size", "learning_rate", "dtype"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    cfg = default_config(args.arch, **overrides)
    out = _outdir(args.out)
    net, records = train(cfg, tr.spins, tr.labels, va.spins, va.labels)
    save_checkpoint(net, out / "model.qnn")
    write_curve(records, out / "curve.csv")
    print(f"arch={cfg.arch} activation={cfg.activation} params={net.param_count()}")
    last = records[-1]
    print(f"final train_acc={last.train_acc:.4f} val_acc={last.val_acc:.4f}")
    test_path = data / "test.qds"
    if test_path.exists():
        te = datasets.load(test_path)
        print(f"test_acc={evaluate(net, te.spins, te.labels).accuracy:.4f}")
    return EXIT_OK


def _dataset_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(path.glob("*.qds"))
        if not found:
            raise UsageError(f"no .qds files in {path}")
        return found
    return [path]


def cmd_eval(args) -> int:
    from .qnn import CLASS_VALUES, load_checkpoint
    from .qnn.train import evaluate

    net = load_checkpoint(args.model)
    rows = []
    for p in _dataset_paths(Path(args.data)):
        ds = datasets.load(p)
        if len(ds) == 0:
            raise UsageError(f"dataset {p} is empty")
        if ds.L != net.config.L:
            raise FormatError(f"dataset {p} has L={ds.L}, model expects {net.config.L}")
        ev = evaluate(net, ds.spins, ds.labels)
        per_class = {}
        for i, C in enumerate(CLASS_VALUES):
            n = ev.confusion[i].sum()
            if n:
                per_class[C] = ev.confusion[i, i] / n
        accs = np.array(list(per_class.values()))
        rows.append([ds.name, len(ds), f"{ev.accuracy:.6f}", f"{accs.std():.6f}",
                     ";".join(f"{C}:{a:.4f}" for C, a in per_class.items())])
    header = ["dataset", "count", "accuracy", "class_accuracy_std", "per_class_accuracy"]
    if args.by_category or len(rows) == 1:
        table = rows
    else:
        total = sum(r[1] for r in rows)
        acc = sum(r[1] * float(r[2]) for r in rows) / total
        table = rows + [["all", total, f"{acc:.6f}", "", ""]]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows([header] + table)
        for r in table:
            print(f"{r[0]}: accuracy={r[2]} (n={r[1]})")
    else:
        csv.writer(sys.stdout).writerows([header] + table)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtopo", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: $QTOPO_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset")
    g.add_argument("kind", choices=["train", "test", "predict", "pca"])
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--sd", type=float, default=0.0, help="h-noise SD (pca only)")
    g.add_argument("--L", type=int, default=spins.DEFAULT_L)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("chern", help="lattice Chern number")
    c.add_argument("path", nargs="?", help="dataset file; omit to use --c/--m")
    c.add_argument("--c", type=int)
    c.add_argument("--m", type=float)
    c.add_argument("--L", type=int, default=spins.DEFAULT_L)
    c.set_defaults(func=cmd_chern)

    f = sub.add_parser("fmap", help="F(p) map as CSV and PGM")
    f.add_argument("--c", type=int, required=True)
    f.add_argument("--m", type=float, required=True)
    f.add_argument("--sd", type=float, default=0.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--L", type=int, default=spins.DEFAULT_L)
    f.add_argument("--out", required=True, help="output prefix")
    f.set_defaults(func=cmd_fmap)

    q = sub.add_parser("pca", help="PCA of the 210-map corpus")
    q.add_argument("--sd", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=42)
    q.add_argument("--components", type=int, default=2)
    q.add_argument("--L", type=int, default=spins.DEFAULT_L)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_pca)

    t = sub.add_parser("train", help="train a classifier")
    t.add_argument("--arch", choices=["qcnn", "cnn"], default="qcnn")
    t.add_argument("--activation", choices=["arctan", "tanh", "relu"], default="arctan")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--dtype", choices=["float64", "float32"])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--data", required=True, help="directory with train/validation(/test).qds")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="dataset file or directory of .qds files")
    e.add_argument("--by-category", action="store_true", help="one row per dataset file")
    e.add_argument("--out", help="CSV report path (default stdout)")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ConsistencyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GapClosedError, IllConditionedError, DegenerateTripleError, NumericalFailureError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
