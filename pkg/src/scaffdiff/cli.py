"""Command-line entry point: ``scaffdiff <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics
from . import numerics as nx
from .config import ConfigError, RunConfig, config_from_dict, field_help, load_config
from .conservation import A3mParseError, augment_pocket, column_conservation, read_a3m
from .diffusion import DiffusionError, model_from_checkpoint, model_meta, train_diffusion
from .domain import DatasetError, load_dataset, save_dataset
from .iprior import ipnet_from_checkpoint, ipnet_meta, pretrain_ipnet
from .sampler import SamplingError, sample_batch
from .schedule import ScheduleError, build_cosine_schedule

log = logging.getLogger("scaffdiff")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigError, DatasetError, A3mParseError, ScheduleError, FileNotFoundError)
RUNTIME_ERRORS = (DiffusionError, SamplingError, nx.CheckpointError, metrics.MetricsError, OSError,
                  ValueError, nx.ShapeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# flags that map one-to-one onto RunConfig fields
_CONFIG_FLAGS = {
    "T": int, "steps": int, "seed": int, "threads": int, "lr": float, "batch_size": int,
    "beta_interpretation": str, "shift_head": str, "coord_scale": float, "repr_noise": float,
    "lr_decay": str,
}


def _add_config_flags(p, names):
    p.add_argument("--config", help="JSON config file; flags override its values")
    for name in names:
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, type=_CONFIG_FLAGS[name], default=None)


def build_parser():
    parser = _Parser(
        prog="scaffdiff",
        description="Interaction-aware R-group diffusion. Config keys and defaults: " + field_help(),
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("schedule", help="noise schedule tools")
    ssub = p.add_subparsers(dest="action", parser_class=_Parser)
    ssub.required = True
    d = ssub.add_parser("dump", help="write one coefficient record per t")
    d.add_argument("--out", default="-")
    _add_config_flags(d, ["T", "beta_interpretation"])

    p = sub.add_parser("conserve", help="per-residue conservation from an A3M alignment")
    p.add_argument("--a3m", required=True)
    p.add_argument("--out", default="-")

    p = sub.add_parser("pretrain-iprior", help="pretrain the interaction prior network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, ["steps", "seed", "lr", "batch_size"])

    p = sub.add_parser("train", help="train the denoiser and shift network")
    p.add_argument("--data", required=True)
    p.add_argument("--iprior", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log path (JSON lines); default <out>/train_log.jsonl")
    _add_config_flags(p, ["T", "steps", "seed", "lr", "batch_size", "beta_interpretation", "shift_head",
                          "coord_scale", "repr_noise", "lr_decay"])

    p = sub.add_parser("sample", help="generate R-groups for every tuple in a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--iprior", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="samples per tuple")
    p.add_argument("--n-atoms", type=int, default=None, help="fixed R-group size")
    p.add_argument("--trace", help="directory for per-step trajectories")
    _add_config_flags(p, ["seed", "threads"])

    p = sub.add_parser("eval", help="validity, uniqueness and interaction statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--a3m-dir", help="directory of <id>.a3m files; overrides stored conservation")
    p.add_argument("--out", default="-")
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("export-poses", help="write one XYZ file per generated molecule")
    p.add_argument("--generated", required=True)
    p.add_argument("--out-dir", required=True)

    sub.add_parser("selfcheck", help="run the fast invariant suite")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k) for k in _CONFIG_FLAGS if getattr(args, k, None) is not None}
    if "seed" not in overrides and getattr(args, "config", None) is None and "SCAFFDIFF_SEED" in os.environ:
        try:
            overrides["seed"] = int(os.environ["SCAFFDIFF_SEED"])
        except ValueError:
            raise ConfigError("SCAFFDIFF_SEED must be an integer") from None
    return config_from_dict(overrides, cfg)


def _write_text(path, text):
    if path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# subcommands

def cmd_schedule(args):
    cfg = resolve_config(args)
    sched = build_cosine_schedule(cfg.T, cfg.beta_interpretation)
    text = "".join(json.dumps(r) + "\n" for r in sched.records())
    _write_text(args.out, text)


def cmd_conserve(args):
    track = column_conservation(read_a3m(args.a3m))
    _write_text(args.out, "".join(f"{i} {s:.6f}\n" for i, s in enumerate(track.scores)))


def cmd_pretrain(args):
    cfg = resolve_config(args)
    data = load_dataset(args.data)
    model, history = pretrain_ipnet(data, cfg.pretrain(), log_fn=lambda r: log.debug(json.dumps(r)))
    nx.save_checkpoint(args.out, model.params, ipnet_meta(model))
    log.info("pretrained interaction prior: final loss %.6g", history[-1])


def _load_ipnet(path):
    params, meta = nx.load_checkpoint(path)
    return ipnet_from_checkpoint(params, meta)


def cmd_train(args):
    cfg = resolve_config(args)
    data = load_dataset(args.data)
    ipnet = _load_ipnet(args.iprior)
    log_path = Path(args.log) if args.log else Path(args.out) / "train_log.jsonl"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "w") as fh:
        def write(rec):
            fh.write(json.dumps(rec) + "\n")
        model, history = train_diffusion(data, ipnet, cfg.train(), log_fn=write)
    nx.save_checkpoint(args.out, model.params, model_meta(model))
    log.info("trained %d steps: final loss %.6g", len(history), history[-1]["loss"] if history else float("nan"))


def _write_trace(directory, pocket_id, i, steps):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / f"{pocket_id}_{i:04d}.jsonl", "w") as fh:
        for st in steps:
            rec = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in st.__dict__.items()}
            fh.write(json.dumps(rec) + "\n")


def cmd_sample(args):
    cfg = resolve_config(args)
    if args.n is not None:
        cfg = replace(cfg, n_samples=args.n)
    params, meta = nx.load_checkpoint(args.model)
    model = model_from_checkpoint(params, meta)
    ipnet = _load_ipnet(args.iprior)
    data = load_dataset(args.data)
    out = []
    for k, tup in enumerate(data):
        pid = tup.id if tup.id is not None else f"tuple{k:04d}"
        traces = [] if args.trace else None
        groups = sample_batch(model, ipnet, tup, cfg.sampler(args.n_atoms), trajectories=traces)
        for i, rg in enumerate(groups):
            out.append(replace(tup, id=pid, rgroup=rg, affinity=None, extra={**tup.extra, "sample": i}))
            if traces is not None:
                _write_trace(args.trace, pid, i, traces[i])
    save_dataset(args.out, out)


def _generated_by_id(path):
    gen = {}
    for k, tup in enumerate(load_dataset(path)):
        if tup.rgroup is None:
            raise DatasetError(f"generated record {k + 1} has no rgroup")
        gen.setdefault(tup.id, []).append(tup.rgroup)
    return gen


def cmd_eval(args):
    data = load_dataset(args.data)
    if args.a3m_dir:
        fixed = []
        for tup in data:
            path = Path(args.a3m_dir) / f"{tup.id}.a3m"
            if not path.exists():
                raise FileNotFoundError(f"no alignment for pocket {tup.id!r}: {path}")
            aug = augment_pocket(tup.pocket, column_conservation(read_a3m(path)))
            fixed.append(replace(tup, pocket=replace(tup.pocket, conservation=aug.conservation[:, 0])))
        data = fixed
    threshold = metrics.CONSERVED_THRESHOLD if args.threshold is None else args.threshold
    report = metrics.evaluate(data, _generated_by_id(args.generated), threshold)
    _write_text(args.out, json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")


def cmd_export(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, tup in enumerate(load_dataset(args.generated)):
        if tup.rgroup is None:
            raise DatasetError(f"generated record {k + 1} has no rgroup")
        lig = metrics.assemble(tup.scaffold, tup.rgroup)
        lines = [str(len(lig)), str(tup.id)]
        lines += [f"{s} {x:.6f} {y:.6f} {z:.6f}" for s, (x, y, z) in zip(lig.symbols, lig.coords)]
        (out_dir / f"{tup.id}_{tup.extra.get('sample', k):04d}.xyz").write_text("\n".join(lines) + "\n")


def cmd_selfcheck(args):
    from .selfcheck import run_selfcheck

    if not run_selfcheck():
        raise DiffusionError("selfcheck failed")


COMMANDS = {
    "schedule": cmd_schedule,
    "conserve": cmd_conserve,
    "pretrain-iprior": cmd_pretrain,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "export-poses": cmd_export,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"scaffdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"scaffdiff: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"scaffdiff: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
