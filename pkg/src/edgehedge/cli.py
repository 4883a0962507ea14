"""Command-line interface.

Subcommands::

    edgehedge init-config -o run.json
    edgehedge gen-traces <gen_spec.json> -o <dir>
    edgehedge profile <traces_dir> -o <profile.json>
    edgehedge train <config.json> -o <checkpoint.npz> [--log <dir>]
    edgehedge evaluate <config.json> <checkpoint.npz> -o <report.json>
    edgehedge compare <config.json> <checkpoint.npz> -o <report.json>
    edgehedge export-plots <report.json> -o <dir>

Exit codes: 0 success, 2 bad configuration or usage, 1 any other failure.
Errors are written to stderr as ``error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .config import GeneratorSection, _format_errors, config_hash, default_config, load_config
from .errors import ConfigError, EdgeHedgeError, ModelError
from .learner import load_checkpoint, save_checkpoint
from .metrics import dumps_report, export_plot_data, read_report
from .seeding import substream
from .traces import generate_traces, profile_service, read_traces, write_traces

PROFILE_FORMAT = "edgehedge-profile"
TRACES_MANIFEST = "manifest.json"


def _atomic_write(path: Path, data: bytes) -> None:
    """Write via a sibling temp file so a failure never leaves a partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def _sha16(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _run_config(args) -> tuple:
    cfg, base_dir = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg, base_dir


# -- subcommands -----------------------------------------------------------------
def cmd_init_config(args) -> None:
    cfg = default_config()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    _atomic_write(Path(args.output), _json_bytes(cfg.model_dump(mode="json")))


def cmd_gen_traces(args) -> None:
    path = Path(args.spec)
    if not path.is_file():
        raise ConfigError(f"generator spec not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    try:
        section = GeneratorSection.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid generator spec: {_format_errors(exc)}") from None
    spec = section.to_spec()
    seed = 0 if args.seed is None else args.seed
    traces = generate_traces(spec, substream(seed, "traces"))
    out = Path(args.output)
    write_traces(traces, out)
    spec_json = json.dumps(section.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    manifest = {"format": "edgehedge-traces", "seed": seed, "spec_hash": _sha16(spec_json.encode()),
                "files": {name: _sha16((out / name).read_bytes())
                          for name in ("bandwidth.csv", "rtt.csv", "comp.csv")}}
    _atomic_write(out / TRACES_MANIFEST, _json_bytes(manifest))


def cmd_profile(args) -> None:
    if args.knee_ratio <= 1.0:
        raise ConfigError("--knee-ratio must be > 1")
    traces_dir = Path(args.traces)
    if not traces_dir.is_dir():
        raise ConfigError(f"traces directory not found: {traces_dir}")
    traces = read_traces(traces_dir)
    services = {}
    for name in sorted(traces.comp_samples):
        stats, nu = profile_service(traces.comp_samples[name], args.knee_ratio)
        services[name] = {"comp_stats": [list(s) for s in stats], "nu": nu}
    digest = hashlib.sha256()
    for name in ("bandwidth.csv", "rtt.csv", "comp.csv"):
        digest.update((traces_dir / name).read_bytes())
    doc = {"format": PROFILE_FORMAT, "version": 1, "knee_ratio": args.knee_ratio,
           "traces_hash": digest.hexdigest()[:16], "services": services}
    _atomic_write(Path(args.output), _json_bytes(doc))


def cmd_train(args) -> None:
    from .runner import run_training

    cfg, base_dir = _run_config(args)
    result, _ = run_training(cfg, base_dir, log_dir=args.log)
    meta = {"config_hash": config_hash(cfg), "seed": cfg.seed, "steps": len(result.records),
            "training_rounds": len(result.losses)}
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=f".{out.name}.", suffix=".npz")
    os.close(fd)
    try:
        save_checkpoint(result.model, tmp, meta)
        os.replace(tmp, out)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _evaluate(args, with_baselines: bool) -> None:
    from .runner import evaluate

    if args.parallel_seeds < 1:
        raise ConfigError("--parallel-seeds must be >= 1")
    cfg, base_dir = _run_config(args)
    model, meta = load_checkpoint(args.checkpoint)
    n_out = 2**cfg.sim.n - 1
    if model.n_outputs_ != n_out:
        raise ModelError(f"checkpoint has {model.n_outputs_} outputs, config with n={cfg.sim.n} needs {n_out}")
    info = {"mode": "compare" if with_baselines else "evaluate",
            "checkpoint_config_hash": meta.get("config_hash")}
    report, _ = evaluate(cfg, model, base_dir, with_baselines=with_baselines,
                         parallel_seeds=args.parallel_seeds, meta=info)
    _atomic_write(Path(args.output), dumps_report(report).encode())


def cmd_evaluate(args) -> None:
    _evaluate(args, with_baselines=False)


def cmd_compare(args) -> None:
    _evaluate(args, with_baselines=True)


def cmd_export_plots(args) -> None:
    report = read_report(args.report)
    export_plot_data(report, args.output)


# -- parser ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgehedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
        p.set_defaults(func=func)
        return p

    p = add("init-config", cmd_init_config, "write the default run config")
    p.add_argument("-o", "--output", required=True)

    p = add("gen-traces", cmd_gen_traces, "generate synthetic bandwidth/RTT/compute traces")
    p.add_argument("spec", help="generator spec JSON ({} for defaults)")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = add("profile", cmd_profile, "profile computation traces into per-k stats and nu")
    p.add_argument("traces", help="traces directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--knee-ratio", type=float, default=1.25)

    p = add("train", cmd_train, "train the scheduler network")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="checkpoint path (.npz)")
    p.add_argument("--log", default=None, help="directory for per-step training logs")

    for name, func, help_ in (("evaluate", cmd_evaluate, "evaluate a trained scheduler"),
                              ("compare", cmd_compare, "evaluate the scheduler and all baselines")):
        p = add(name, func, help_)
        p.add_argument("config")
        p.add_argument("checkpoint")
        p.add_argument("-o", "--output", required=True, help="report path (.json)")
        p.add_argument("--parallel-seeds", type=int, default=1,
                       help="evaluate N consecutive seeds in parallel and merge by seed order")

    p = add("export-plots", cmd_export_plots, "write per-panel CSVs from a report")
    p.add_argument("report")
    p.add_argument("-o", "--output", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except EdgeHedgeError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("error[interrupted]: aborted by user", file=sys.stderr)
        return 130
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
