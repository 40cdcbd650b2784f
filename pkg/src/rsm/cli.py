"""Command-line interface.

Exit codes: 0 success, 2 configuration/parse error, 3 data mismatch,
4 numerical failure. The result document goes to stdout (or --out);
diagnostics go to stderr, with verbosity set by ``RSM_LOG``.
"""

import argparse
import datetime as dt
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .errors import InvalidInputError, RSMError
from .io import dumps, load_gallery, load_probe, sha256_file, write_json, write_labels, write_matrix, write_rows
from .synth import (
    GENERATOR_METADATA,
    aggregate_cmc,
    generate_instance,
    rank_probe,
    run_trials,
    spec_metadata,
    sweep_L,
    sweep_lambda,
)

log = logging.getLogger("rsm")


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _manifest(command, args, cfg, outputs, started):
    return {
        "config_hash": cfg.digest(),
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "generator": GENERATOR_METADATA,
        "versions": {
            "rsm": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "started": started,
        "finished": _now(),
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _overrides(args):
    return {
        "lambda": getattr(args, "lam", None),
        "T": getattr(args, "T", None),
        "tol": getattr(args, "tol", None),
        "zeta": getattr(args, "zeta", None),
        "tau": getattr(args, "tau", None),
        "seed": getattr(args, "seed", None),
        "experiment.trials": getattr(args, "trials", None),
        "experiment.sweep_L": getattr(args, "sweep_L", None),
        "experiment.lambda_grid": getattr(args, "lambda_grid", None),
        "experiment.methods": getattr(args, "methods", None),
    }


def cmd_generate(args):
    started = _now()
    cfg = load_config(args.config, **_overrides(args))
    inst = generate_instance(cfg.generator_config())
    out = _out_dir(args.out)
    files = [out / "gallery.csv", out / "labels.csv"]
    try:
        write_matrix(files[0], inst.gallery.matrix)
        write_labels(files[1], [inst.gallery.original_label(c) for c in inst.gallery.labels])
        for p in inst.probes:
            path = out / f"probe_{inst.gallery.original_label(p.true_subject)}.csv"
            write_matrix(path, p.Y)
            files.append(path)
        write_json(out / "manifest.json", _manifest("generate", args, cfg, files, started))
    except OSError as exc:
        raise InvalidInputError(f"cannot write to {out}: {exc}") from exc
    log.info("wrote %d files to %s", len(files) + 1, out)
    return 0


def cmd_rank(args):
    cfg = load_config(args.config, **_overrides(args))
    gallery = load_gallery(args.gallery, args.labels)
    if cfg.normalize_columns:
        gallery = gallery.normalized()
    probe = load_probe(args.probe)
    probe.check_against(gallery)
    result = rank_probe(args.method, gallery, probe, cfg.hyperparams(), cfg.inference(), cfg.ranking(), cfg.l1())
    doc = result.to_dict(gallery.label_map)
    doc["method"] = args.method.upper()
    doc["config_hash"] = cfg.digest()
    text = dumps(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(args):
    started = _now()
    cfg = load_config(args.config, **_overrides(args))
    spec = cfg.experiment_spec()
    exp = cfg.experiment
    out = _out_dir(args.out)
    jobs = max(1, args.jobs)

    records = run_trials(spec, exp.trials, jobs)
    aggregate = aggregate_cmc(records)
    results_doc = {
        "config_hash": cfg.digest(),
        "config": spec_metadata(spec),
        "trials": records,
        "aggregate": {m: {"mean": c.accuracy, "std": c.std} for m, c in aggregate.items()},
    }
    files = [out / "results.json", out / "cmc.csv"]
    write_json(files[0], results_doc)
    cmc_rows = [
        {"method": m, "rank": r, "mean": float(mu), "std": float(sd)}
        for m, c in aggregate.items()
        for r, (mu, sd) in enumerate(zip(c.accuracy, c.std), start=1)
    ]
    write_rows(files[1], ["method", "rank", "mean", "std"], cmc_rows)

    if exp.sweep_L:
        files.append(out / "sweep.csv")
        write_rows(files[-1], ["L", "method", "rank1_mean", "rank1_std"], sweep_L(spec, exp.sweep_L, exp.trials, jobs))
    if exp.lambda_grid:
        files.append(out / "lambda_sweep.csv")
        rows = sweep_lambda(spec, exp.lambda_grid, exp.trials, jobs)
        write_rows(files[-1], ["lambda", "rank1_mean", "rank1_std"], rows)
    write_json(out / "manifest.json", _manifest("experiment", args, cfg, files, started))
    for m, c in aggregate.items():
        log.info("%s rank-1 accuracy %.3f", m, c.rank1)
    return 0


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _method_list(text):
    return [m.strip().upper() for m in text.split(",") if m.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="rsm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def hyper_flags(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--lambda", dest="lam", type=float, help="dense-noise variance")
        sp.add_argument("--T", type=int, help="inference sweeps for the first rank")
        sp.add_argument("--tol", type=float, help="early-stop threshold (0 = fixed T)")
        sp.add_argument("--zeta", type=float, help="warm-start snapshot fraction")
        sp.add_argument("--tau", type=float, help="per-rank iteration decay")
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="write a synthetic gallery and probes")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("rank", help="rank gallery subjects for one probe")
    r.add_argument("--gallery", required=True)
    r.add_argument("--labels", required=True)
    r.add_argument("--probe", required=True)
    r.add_argument("--method", default="rsm", type=str.lower, choices=["rsm", "isr", "src"])
    hyper_flags(r)
    r.add_argument("--out", help="write the ranking here instead of stdout")
    r.set_defaults(func=cmd_rank)

    e = sub.add_parser("experiment", help="run synthetic identification trials")
    hyper_flags(e)
    e.add_argument("--method", dest="methods", type=_method_list, help="comma-separated, e.g. rsm,isr")
    e.add_argument("--trials", type=int)
    e.add_argument("--sweep-L", dest="sweep_L", type=_int_list, help="comma-separated L values")
    e.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_experiment)
    return p


def _setup_logging():
    level = os.environ.get("RSM_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RSMError as exc:
        print(f"rsm: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
