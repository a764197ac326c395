"""Command-line front end.

    redlab simulate --model continuous --drop-mode deterministic --t-end 100
    redlab oracle --config net.json --t-end 200 --seed 3
    redlab compare --a model.csv --b oracle.csv
    redlab estimate --truth oracle.csv --observe W1 --every 0.5 --particles 1000
    redlab scenario two-classes --model continuous --seed 1
    redlab replay trace.manifest.json

Every run writes a trace CSV, a drop CSV and a manifest next to ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import analysis, config, estimation, io
from .core import ConfigError, IntegrationDiverged, NetworkConfig, RedParams
from .runner import execute

log = logging.getLogger("redlab")


def _outputs(out: str) -> dict:
    p = Path(out)
    return {
        "trace": p,
        "drops": p.with_name(p.stem + "_drops.csv"),
        "manifest": p.with_name(p.stem + ".manifest.json"),
    }


def _run_and_write(command, cfg, red, run, out) -> dict:
    trace = execute(cfg, red, run)
    paths = _outputs(out)
    io.write_trace(paths["trace"], trace)
    io.write_drops(paths["drops"], trace)
    io.write_manifest(paths["manifest"], command, cfg, red, run, trace,
                      {k: v for k, v in paths.items() if k != "manifest"})
    log.info("wrote %s (%d samples)", paths["trace"], len(trace))
    return {**paths, "trace": trace}


def _load(args):
    if args.config:
        cfg, red, run = config.load(args.config)
    else:
        cfg, red, run = NetworkConfig(), RedParams(), config.RunConfig()
    overrides = {}
    for name in ("model", "drop_mode", "t_end", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg, red, dataclasses.replace(run, **overrides)


def cmd_simulate(args) -> int:
    cfg, red, run = _load(args)
    if run.model == "oracle":
        raise ConfigError("use the 'oracle' subcommand for packet-level runs")
    _run_and_write("simulate", cfg, red, run, args.out)
    return 0


def cmd_oracle(args) -> int:
    cfg, red, run = _load(args)
    run = dataclasses.replace(run, model="oracle", sample_dt=args.sample_dt)
    _run_and_write("oracle", cfg, red, run, args.out)
    return 0


def _stats_report(trace, name) -> dict:
    if name == "two-classes":
        windows = {"all_on": analysis.ALL_ON_WINDOWS, "half_off": analysis.HALF_OFF_WINDOWS}
    else:
        windows = {"steady": ((10.0, float("inf")),)}
    report = {}
    for key, win in windows.items():
        try:
            mean, std = analysis.queue_stats(trace, windows=win)
            report[key] = {"mean": mean, "stdev": std}
        except analysis.AnalysisError as e:
            report[key] = {"error": str(e)}
    try:
        report["period"] = analysis.oscillation_period(trace.window(10.0, float("inf")))
    except analysis.AnalysisError:
        report["period"] = None
    return report


def cmd_scenario(args) -> int:
    cfg, red, run = config.scenario(args.name, args.model, args.seed, args.t_end)
    if args.drop_mode:
        run = dataclasses.replace(run, drop_mode=args.drop_mode)
    if run.model == "continuous":
        run = dataclasses.replace(run, sample_every=args.sample_every)
    out = args.out or f"{args.name}-{run.model}.csv"
    res = _run_and_write(f"scenario {args.name}", cfg, red, run, out)
    print(json.dumps(_stats_report(res["trace"], args.name), indent=2))
    return 0


def cmd_compare(args) -> int:
    a = io.read_trace(args.a)
    b = io.read_trace(args.b)
    report = analysis.compare(a, b, args.bin_width)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _observed_senders(spec: str) -> list[int]:
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not (tok.startswith("W") and tok[1:].isdigit() and int(tok[1:]) >= 1):
            raise ConfigError(f"cannot observe {tok!r}; use W1, W2, ...")
        out.append(int(tok[1:]) - 1)
    return out


def cmd_estimate(args) -> int:
    truth = io.read_trace(args.truth)
    if args.config:
        cfg, red, _ = config.load(args.config)
    else:
        cfg, red, _ = config.scenario(args.scenario)
    if cfg.n_senders != truth.n_senders:
        raise ConfigError(
            f"truth has {truth.n_senders} senders but the network has {cfg.n_senders}"
        )
    senders = _observed_senders(args.observe)
    if max(senders) >= cfg.n_senders:
        raise ConfigError(f"no sender W{max(senders) + 1} in this network")
    res = estimation.run_filter(
        truth, cfg, red, observe=senders, every=args.every,
        n_particles=args.particles, window_std=args.window_std, seed=args.seed,
    )
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "q_true", "q_est", "q_std"])
        for row in zip(res.t, res.q_true, res.q_est, res.q_std):
            w.writerow([repr(float(v)) for v in row])
    half = res.t[-1] - 50.0 if len(res.t) else 0.0
    print(json.dumps({
        "rmse_last_50s": res.rmse(half),
        "baseline_rmse_last_50s": res.baseline_rmse(half),
        **res.diagnostics,
    }, indent=2))
    return 0


def cmd_replay(args) -> int:
    manifest = io.load_manifest(args.manifest)
    trace, same = io.replay(manifest)
    if args.out:
        io.write_trace(args.out, trace)
    print("reproduced" if same else "MISMATCH")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="redlab", description="TCP/RED bottleneck laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp, models):
        sp.add_argument("--config", help="JSON config file")
        if models:
            sp.add_argument("--model", choices=models)
        sp.add_argument("--drop-mode", dest="drop_mode",
                        choices=["none", "deterministic", "interdrop", "full-red"])
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="trace.csv")

    sp = sub.add_parser("simulate", help="run a hybrid model")
    run_opts(sp, ["continuous", "discrete"])
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="run the packet-level simulator")
    run_opts(sp, None)
    sp.add_argument("--sample-dt", dest="sample_dt", type=float)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("compare", help="compare two trace CSVs")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--bin-width", dest="bin_width", type=float, default=1.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("estimate", help="particle-filter a truth trace")
    sp.add_argument("--truth", required=True)
    sp.add_argument("--config")
    sp.add_argument("--scenario", default="two-classes", choices=config.SCENARIOS)
    sp.add_argument("--observe", default="W1")
    sp.add_argument("--every", type=float, default=0.5)
    sp.add_argument("--particles", type=int, default=1000)
    sp.add_argument("--window-std", dest="window_std", type=float, default=1.0)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="estimate.csv")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("scenario", help="run a named preset")
    sp.add_argument("name", choices=config.SCENARIOS)
    sp.add_argument("--model", default="continuous", choices=config.MODELS)
    sp.add_argument("--drop-mode", dest="drop_mode",
                    choices=["none", "deterministic", "interdrop", "full-red"])
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sample-every", dest="sample_every", type=int, default=4)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("replay", help="rerun a manifest and check the trace")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IntegrationDiverged, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
