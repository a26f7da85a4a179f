"""``qrenn <subcommand> --config PATH [--seed N] [--output DIR] [--threads K]``.

Each run writes ``<subcommand>.csv`` (plus auxiliary CSVs), PNG figures and
``manifest.json`` into the output directory.  Failures write ``error.json``
and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, bench, plotting
from . import data as ds
from .config import COMMANDS, ConfigError, RunConfig, load_document, parse_config, serialize
from .dla import analyze
from .numerics import pauli_word

SCHEMAS = {
    "gradstats": ["n", "T", "samples", "mean", "variance", "stderr", "predicted_variance"],
    "train": ["index", "label", "fhat", "prediction"],
    "loss": ["epoch", "loss"],
    "spt": ["index", "lambda", "label", "fhat", "prediction"],
    "spt_sweep": ["train_size", "repeats", "mean_accuracy", "std_accuracy"],
    "dla-analyze": ["component", "index", "dimension"],
    "overlap-scan": ["n", "lambda", "probe", "overlap"],
    "dataset-gen": ["index", "split", "label", "feature_tag", "meta"],
}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path: Path, schema: str, rows) -> Path:
    cols = SCHEMAS[schema]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- commands -----------------------------------------------------------------
# each returns (summary dict, list of written files)

def _cmd_gradstats(cfg: RunConfig, out: Path):
    res = bench.gradient_statistics(cfg.params_object())
    rows = res.metrics["rows"]
    files = [write_csv(out / "gradstats.csv", "gradstats", rows),
             plotting.plot_gradstats(rows, out / "gradstats.png")]
    return {"rows": len(rows), "max_abs_mean_over_stderr":
            max(abs(r["mean"]) / r["stderr"] if r["stderr"] > 0 else 0.0 for r in rows)}, files


def _train_rows(metrics):
    return [{"index": i, "label": lab, "fhat": f, "prediction": p}
            for i, (lab, f, p) in enumerate(zip(metrics["test_labels"], metrics["test_fhat"],
                                                metrics["test_predictions"]))]


def _loss_rows(curve):
    return [{"epoch": i, "loss": v} for i, v in enumerate(curve)]


def _cmd_train(cfg: RunConfig, out: Path):
    res = bench.train_classifier(cfg.params_object())
    m = res.metrics
    files = [write_csv(out / "train.csv", "train", _train_rows(m)),
             write_csv(out / "train_loss.csv", "loss", _loss_rows(m["loss_curve"])),
             plotting.plot_loss(m["loss_curve"], out / "train_loss.png")]
    return {"test_accuracy": m["test_accuracy"], "train_accuracy": m["train_accuracy"],
            "final_loss": m["final_loss"], "flipped_train_labels": m["flipped_train_labels"]}, files


def _cmd_spt(cfg: RunConfig, out: Path):
    params = cfg.params_object()
    sizes, repeats = params.training_sizes, params.repeats
    kw = {k: v for k, v in asdict(params).items() if k not in ("training_sizes", "repeats")}
    res = bench.spt_experiment(bench.TrainConfig(**kw), sizes, repeats)
    m = res.metrics
    rows = [{"index": i, "lambda": lam, "label": lab, "fhat": f, "prediction": p}
            for i, (lam, lab, f, p) in enumerate(zip(m["test_meta"], m["test_labels"], m["test_fhat"],
                                                     m["test_predictions"]))]
    files = [write_csv(out / "spt.csv", "spt", rows),
             write_csv(out / "spt_loss.csv", "loss", _loss_rows(m["loss_curve"])),
             plotting.plot_spt(m["test_meta"], m["test_fhat"], m["test_labels"], out / "spt.png"),
             plotting.plot_loss(m["loss_curve"], out / "spt_loss.png")]
    if m["size_sweep"]:
        files.append(write_csv(out / "spt_sweep.csv", "spt_sweep", m["size_sweep"]))
        files.append(plotting.plot_size_sweep(m["size_sweep"], out / "spt_sweep.png"))
    return {"test_accuracy": m["test_accuracy"], "train_accuracy": m["train_accuracy"],
            "final_loss": m["final_loss"]}, files


def _cmd_dla(cfg: RunConfig, out: Path):
    p = cfg.params_object()
    if p.hamiltonian == "random":
        rng = np.random.default_rng(cfg.seed)
        h = ds.gen_fixed_spectrum(p.n, p.distinct_eigenvalues, rng)
    else:
        h = pauli_word(p.hamiltonian)
        if h.shape[0] != 2**p.n:
            raise ValueError(f"hamiltonian {p.hamiltonian!r} does not act on n={p.n} qubits")
    dec = analyze(p.m, [h], p.control, p.tol)
    rows = [{"component": "closure", "index": 0, "dimension": dec.closure.dim},
            {"component": "center", "index": 0, "dimension": dec.center.dim}]
    rows += [{"component": "ideal", "index": i, "dimension": d} for i, d in enumerate(dec.ideal_dims)]
    files = [write_csv(out / "dla-analyze.csv", "dla-analyze", rows)]
    return {"closure_dim": dec.closure.dim, "ideal_dims": list(dec.ideal_dims),
            "center_dim": dec.center.dim, "center_claim": dec.center_claim,
            "distinct_eigenvalues": dec.r}, files


def _cmd_overlap(cfg: RunConfig, out: Path):
    p = cfg.params_object()
    grid = np.linspace(p.lambda_min, p.lambda_max, p.lambda_points)
    rows = bench.overlap_scan([int(n) for n in p.n_list], grid, tuple(p.probes))
    files = [write_csv(out / "overlap-scan.csv", "overlap-scan", rows),
             plotting.plot_overlap(rows, out / "overlap-scan.png")]
    flat = {}
    for probe in p.probes:
        for n in p.n_list:
            v = [r["overlap"] for r in rows if r["probe"] == probe and r["n"] == n]
            flat[f"{probe}:n={n}"] = max(v) / min(v) if min(v) > 0 else float("inf")
    return {"rows": len(rows), "max_min_ratio": flat}, files


def _cmd_dataset(cfg: RunConfig, out: Path):
    p = cfg.params_object()
    rng = np.random.default_rng(cfg.seed)
    split = ds.build_dataset(p.feature_tag, p.n, p.total, p.train_size, rng,
                             lambda_range=(p.lambda_min, p.lambda_max))
    split = ds.DatasetSplit(split.train, split.test, cfg.seed, split.feature_tag, split.n)
    manifest = ds.save_dataset(split, out / "dataset")
    rows = [{"index": i, "split": "train" if i < len(split.train) else "test", "label": s.label,
             "feature_tag": s.feature_tag, "meta": s.meta}
            for i, s in enumerate(list(split.train) + list(split.test))]
    files = [write_csv(out / "dataset-gen.csv", "dataset-gen", rows),
             out / "dataset.json", out / "dataset.bin"]
    return {"samples": len(rows), "dataset_sha256": manifest["sha256"]}, files


DISPATCH = {
    "gradstats": _cmd_gradstats,
    "train": _cmd_train,
    "spt": _cmd_spt,
    "dla-analyze": _cmd_dla,
    "overlap-scan": _cmd_overlap,
    "dataset-gen": _cmd_dataset,
}


# -- running ------------------------------------------------------------------

def _provenance(exc: BaseException) -> str:
    """Innermost package module on the traceback."""
    mod = "qrenn.cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("qrenn"):
            mod = name
    return mod


def _write_error(out: Path, command: str, exc: BaseException) -> None:
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "error": type(exc).__name__, "message": str(exc),
              "module": _provenance(exc), "path": getattr(exc, "path", None)}
    (out / "error.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def _thread_limit(threads: int):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads if threads > 0 else None)


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        with _thread_limit(cfg.threads):
            summary, files = DISPATCH[cfg.command](cfg, out)
    except Exception as exc:  # surfaced as a machine-readable record
        _write_error(out, cfg.command, exc)
        print(f"qrenn {cfg.command}: FAILED in {_provenance(exc)}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    manifest = {
        "command": cfg.command,
        "config": serialize(cfg),
        "seed": cfg.seed,
        "version": __version__,
        "wall_time": time.perf_counter() - t0,
        "summary": summary,
        "files": {Path(f).name: sha256_file(f) for f in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float))
    brief = ", ".join(f"{k}={v}" for k, v in summary.items() if not isinstance(v, dict))
    print(f"qrenn {cfg.command}: ok ({brief}) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qrenn", description="Recurrent embedding network experiments.")
    ap.add_argument("--version", action="version", version=f"qrenn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", required=True, help="JSON or YAML run configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--output", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="BLAS threads, 0 = auto")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get("QRENN_THREADS"):
        threads = int(os.environ["QRENN_THREADS"])
    try:
        doc = load_document(args.config)
        cfg = parse_config(doc, args.command, args.seed, args.output, threads)
    except (ConfigError, OSError, ValueError) as exc:
        out = Path(args.output or "output")
        _write_error(out, args.command, exc)
        print(f"qrenn {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
