"""Command-line entry point: ``qsnn {spike,evolve,ttm,analyze,pipeline}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline as pl
from .artifacts import RunWriter, read_csv
from .config import RunConfig, parse_config, reference_config_path, scenario_config
from .errors import ConfigError, QSNNError, StageError

log = logging.getLogger("qsnn")

SCENARIOS = ("a", "b", "c")


def resolve_out_dir(cli_out: str | None, cfg: RunConfig) -> Path:
    """--out, then $QSNN_OUT, then io.out_dir from the config."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get("QSNN_OUT")
    if env:
        return Path(env)
    return Path(cfg.io.out_dir)


def _load(args) -> RunConfig:
    path = args.config or reference_config_path()
    cfg = parse_config(path)
    if args.scenario and args.scenario != "all":
        cfg = scenario_config(cfg, args.scenario)
    return cfg


def _spike_lists(args, cfg: RunConfig):
    if args.spikes:
        return pl.read_spike_list(args.spikes)
    return pl.run_spike_stage(cfg).spikes


def cmd_spike(args) -> int:
    cfg = _load(args)
    w = RunWriter(resolve_out_dir(args.out, cfg))
    w.json("effective_config.json", cfg.effective())
    st = pl.run_spike_stage(cfg)
    pl.write_spike_stage(w, st)
    print(f"spike counts {st.counts[0]} / {st.counts[1]}, q = {st.q:g}")
    return 0


def cmd_evolve(args) -> int:
    cfg = _load(args)
    w = RunWriter(resolve_out_dir(args.out, cfg))
    schedule = pl.spike_to_theta(pl.select_spikes(_spike_lists(args, cfg), cfg.mapping.source),
                                 cfg.mapping)
    pl.write_schedule(w, "", schedule)
    qs = pl.run_evolve_stage(cfg, schedule)
    pl.write_evolve_stage(w, "", qs)
    print(f"evolved {schedule.N} schedule entries, {len(qs.trajectory.times)} records")
    return 0


def cmd_ttm(args) -> int:
    cfg = _load(args)
    w = RunWriter(resolve_out_dir(args.out, cfg))
    schedule = pl.spike_to_theta(pl.select_spikes(_spike_lists(args, cfg), cfg.mapping.source),
                                 cfg.mapping)
    summary = pl.run_ttm_stage(cfg, schedule, w)
    print(f"TTM K={summary['K']}: max trace distance to direct {summary['max_trace_distance']:.3e}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _load(args)
    out = resolve_out_dir(args.out, cfg)
    w = RunWriter(out)
    src = Path(args.input) if args.input else out / "trace.csv"
    if src.exists():
        cols = read_csv(src)
    else:
        a, b = pl.run_spike_stage(cfg).trains
        cols = {"t": a.t, "v1": a.v, "v2": b.v}
    names = args.columns
    missing = [c for c in ["t", *names] if c not in cols]
    if missing:
        raise QSNNError(f"{src}: missing column(s) {', '.join(missing)}")
    b = cols[names[1]] if len(names) > 1 else None
    res = pl.run_analysis(cols["t"], cols[names[0]], b, w, args.window)
    for k, v in res.items():
        print(f"{k}: {v}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = parse_config(args.config or reference_config_path())
    root = resolve_out_dir(args.out, cfg)
    if args.scenario == "all":
        names = sorted(cfg.scenarios)
        if not names:
            raise ConfigError("config defines no scenarios", "scenarios")
        runs = [(n, scenario_config(cfg, n), root / n) for n in names]
    elif args.scenario:
        runs = [(args.scenario, scenario_config(cfg, args.scenario), root)]
    else:
        runs = [(None, cfg, root)]
    for name, c, out in runs:
        res = pl.run_pipeline(c, out, name)
        classes = ", ".join(p.cls.value for p in res.packets) or "none"
        print(f"{name or 'base'}: {len(res.packets)} packet(s) [{classes}] -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: packaged reference config)")
    common.add_argument("--out", help="output directory (overrides $QSNN_OUT and io.out_dir)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="qsnn", description="Spiking-driven open quantum system simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spike", parents=[common], help="integrate the neuron circuit and count spikes")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.set_defaults(func=cmd_spike)

    for name, func, text in (("evolve", cmd_evolve, "evolve the qubit-cavity master equation"),
                             ("ttm", cmd_ttm, "learn transfer tensors and propagate")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--scenario", choices=SCENARIOS)
        p.add_argument("--spikes", help="spike_list.csv from an earlier run (skips the circuit)")
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", parents=[common], help="decay fit, delay and spectrum of a waveform CSV")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--input", help="CSV with a 't' column (default: <out>/trace.csv)")
    p.add_argument("--columns", nargs="+", default=["v1", "v2"], metavar="COL",
                   help="signal column, optionally followed by a second one for the delay")
    p.add_argument("--window", choices=["none", "hann"], default="none")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage and emit packets")
    p.add_argument("--scenario", choices=SCENARIOS + ("all",))
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc} (manifest: {exc.manifest})", file=sys.stderr)
        return 1
    except (QSNNError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
