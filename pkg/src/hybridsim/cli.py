"""Batch command line for the hybrid simulation pipeline.

Every subcommand reads the experiment config, writes its artifacts into the
work directory and prints a one-line summary. Artifacts carry a provenance
record (command, arguments, config, seed).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .evalkit import aggregated_modeling_error, cross_validate, forest_trainer, sweep_cell_width
from .geo_rem import Rem, build_rem, normalize_direction
from .mobility import NetworkError
from .pipeline import ModelPair, rem_features, select_direction, train_models
from .scenario_io import (
    CampaignFormatError, generate_campaign, load_campaign, save_campaign,
)
from .sim_engine import SchemeSummary, run_batch

log = logging.getLogger("hybridsim")

SHORT = {"uplink": "ul", "downlink": "dl"}
NON_RESULT_ARGS = {"func", "workdir", "verbose", "workers"}


class CliError(RuntimeError):
    pass


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, data: dict):
    _atomic_write(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


def _rows_csv(rows, columns, provenance) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg = ExperimentConfig.load(args.config)
        self.workdir = Path(args.workdir)
        self.seed = args.seed if getattr(args, "seed", None) is not None else self.cfg.seed

    def provenance(self, **extra) -> dict:
        # only arguments that can change the results
        args = {k: v for k, v in vars(self.args).items() if k not in NON_RESULT_ARGS}
        return {"command": self.args.command, "args": args, "config_path": str(self.cfg.path),
                "config": self.cfg.raw, "seed": self.seed, "version": __version__, **extra}

    def artifact(self, name) -> Path:
        return self.workdir / name

    def require(self, name) -> Path:
        p = self.artifact(name)
        if not p.exists():
            raise CliError(f"{p}: required artifact missing (run the producing subcommand first)")
        return p

    def campaign(self):
        path = Path(self.args.campaign) if getattr(self.args, "campaign", None) else self.require("campaign.csv")
        return load_campaign(path)

    def rem(self) -> Rem:
        return Rem.load(self.require("rem.json"))

    def models(self, direction) -> ModelPair:
        return ModelPair.load(self.require(f"model_{SHORT[direction]}.json"))


# -- subcommands -----------------------------------------------------------

def cmd_generate(ctx: Context):
    cfg = ctx.cfg
    camp = cfg.raw["campaign"]
    samples = generate_campaign(
        cfg.field(), cfg.network(), cfg.campaign_trips(),
        sampling_rate=float(camp.get("sampling_rate", 1.0)),
        seed=ctx.seed if ctx.args.seed is not None else int(camp.get("seed", ctx.seed)),
        position_noise=float(camp.get("position_noise", 0.0)),
    )
    out = Path(ctx.args.out) if ctx.args.out else ctx.artifact("campaign.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    save_campaign(samples, tmp, ctx.provenance())
    os.replace(tmp, out)
    return f"generate: {len(samples)} samples -> {out}"


def cmd_build_rem(ctx: Context):
    c = ctx.args.cell_width or float(ctx.cfg.get("rem.cell_width", 25.0))
    samples = ctx.campaign()
    rem = build_rem(samples, c)
    out = ctx.artifact("rem.json")
    data = rem.to_dict()
    data["provenance"] = ctx.provenance(cell_width=c)
    _write_json(out, data)
    cells = len(rem.cells)
    return f"build-rem: c={c:g} m, {cells} populated cells, {rem.rejected} rejected -> {out}"


def cmd_train(ctx: Context):
    direction = normalize_direction(ctx.args.direction or ctx.cfg.direction)
    samples = ctx.campaign()
    rem = ctx.rem()
    pair = train_models(samples, rem, direction, ctx.cfg.forest_params(), seed=ctx.seed,
                        gpr_max_points=int(ctx.cfg.get("gpr.max_points", 2000)))
    out = ctx.artifact(f"model_{SHORT[direction]}.json")
    data = pair.to_dict()
    data["provenance"] = ctx.provenance(direction=direction)
    _atomic_write(out, json.dumps(data) + "\n")
    hp = pair.gpr.hyperparams
    return (f"train: {direction}, {pair.forest.num_trees} trees, GP l={hp.length_scale:.3g} "
            f"sf={hp.signal_std:.3g} sn={hp.noise_std:.3g} -> {out}")


def _schemes(ctx, direction):
    only = None
    if getattr(ctx.args, "scheme", None) and ctx.args.scheme != "all":
        only = {ctx.args.scheme}
    schemes = ctx.cfg.schemes(direction, only)
    if not schemes:
        raise CliError(f"no scheme matching {ctx.args.scheme!r} in {ctx.cfg.path}")
    return schemes


def cmd_simulate(ctx: Context):
    direction = normalize_direction(ctx.args.direction or ctx.cfg.direction)
    pair = ctx.models(direction)
    rem = ctx.rem()
    scenario = ctx.cfg.scenario(duration=ctx.args.duration if ctx.args.duration is not None else ...,
                                direction=direction)
    schemes = _schemes(ctx, direction)
    batch = run_batch(scenario, schemes, (pair.forest, pair.gpr), rem, ctx.args.runs,
                      ctx.seed, ctx.args.workers)
    outdir = ctx.artifact("results")
    summary = {}
    for name, results in batch.items():
        for r, res in enumerate(results):
            prov = ctx.provenance(scheme=name, run=r, run_seed=res.seed)
            _atomic_write(outdir / f"{name}_run{r:03d}.csv", res.to_csv(prov))
        s = SchemeSummary.from_results(name, results)
        summary[name] = dict(s.to_dict(), residual_buffers=[res.residual_buffer for res in results])
    _write_json(outdir / "summary.json", {"provenance": ctx.provenance(), "schemes": summary})
    means = ", ".join(f"{k}={v['mean']:.3f}" for k, v in summary.items())
    return f"simulate: {ctx.args.runs} run(s), mean achieved rate [MBit/s] {means} -> {outdir}"


def cmd_sweep(ctx: Context):
    widths = ctx.args.widths or ctx.cfg.get("sweep.widths", [5, 10, 25, 50, 100, 200])
    widths = sorted(float(w) for w in widths)
    samples = ctx.campaign()
    directions = [normalize_direction(d) for d in (ctx.args.direction or ["ul", "dl"])]
    probe = None
    if ctx.args.probe_trip:
        scenario = ctx.cfg.scenario()
        from .mobility import sample_trajectory, start_state
        traj = sample_trajectory(start_state(scenario.network, scenario.route, scenario.waypoints[0]),
                                 scenario.network, scenario.dt, scenario.duration or 600.0)
        probe = [p for t, p, v in traj[:: round(1 / scenario.dt)]]
    res = sweep_cell_width(
        samples, widths, forest_trainer(ctx.cfg.forest_params("sweep.forest")
                                        if "forest" in ctx.cfg.raw.get("sweep", {}) else None,
                                        seed=ctx.seed),
        seed=ctx.seed, k=int(ctx.args.folds or ctx.cfg.get("sweep.folds", 10)),
        directions=directions, probe_positions=probe,
    )
    prov = ctx.provenance(widths=widths)
    _atomic_write(ctx.artifact("sweep.csv"), _rows_csv(res.rows(), res.columns(), prov))
    _write_json(ctx.artifact("sweep.json"), dict(res.to_dict(), provenance=prov))
    best = {SHORT[d]: widths[int(np.argmin(v))] for d, v in res.rate_rmse.items()}
    return f"sweep: {len(widths)} widths, best rate RMSE at {best} -> {ctx.artifact('sweep.csv')}"


def cmd_evaluate(ctx: Context):
    direction = normalize_direction(ctx.args.direction or ctx.cfg.direction)
    samples = ctx.campaign()
    rem = ctx.rem()
    pair = ctx.models(direction)
    subset = select_direction(samples, direction)
    cv = cross_validate(
        rem_features(rem, subset), [s.data_rate for s in subset],
        k=int(ctx.args.folds), trainer=forest_trainer(ctx.cfg.forest_params("sweep.forest")
                                                      if "forest" in ctx.cfg.raw.get("sweep", {})
                                                      else None, seed=ctx.seed),
        seed=ctx.seed,
    )
    scenario = ctx.cfg.scenario(direction=direction)
    schemes = _schemes(ctx, direction)
    sim = run_batch(scenario, schemes, (pair.forest, pair.gpr), rem, ctx.args.runs, ctx.seed,
                    ctx.args.workers)
    ref = run_batch(scenario, schemes, None, None, ctx.args.runs, ctx.seed, ctx.args.workers,
                    reference=(ctx.cfg.field(), pair.forest))
    rows = []
    for name in schemes:
        s = SchemeSummary.from_results(name, sim[name])
        r = SchemeSummary.from_results(name, ref[name])
        err = aggregated_modeling_error(s.rates, r.rates)
        rows.append({"scheme": name, "sim_mean": s.mean, "ref_mean": r.mean,
                     "sim_median": s.median, "ref_median": r.median,
                     "relative_mean_error": err.relative_mean_error,
                     "wasserstein": err.wasserstein})
    prov = ctx.provenance(direction=direction)
    cols = list(rows[0])
    _atomic_write(ctx.artifact("evaluation.csv"), _rows_csv(rows, cols, prov))
    _write_json(ctx.artifact("evaluation.json"),
                {"provenance": prov, "cross_validation": cv.to_dict(), "schemes": rows})
    errs = ", ".join(f"{r['scheme']}={r['relative_mean_error']:.3f}" for r in rows)
    return (f"evaluate: {direction} CV RMSE {cv.rmse:.3f}±{cv.rmse_std:.3f} MBit/s, "
            f"relative modeling error {errs} -> {ctx.artifact('evaluation.json')}")


def cmd_bench(ctx: Context):
    direction = normalize_direction(ctx.args.direction or ctx.cfg.direction)
    pair = ctx.models(direction)
    rem = ctx.rem()
    scenario = ctx.cfg.scenario(duration=ctx.args.duration, direction=direction)
    if not scenario.loop:
        scenario.loop = True
    rows = []
    for name, cfg in _schemes(ctx, direction).items():
        res = run_batch(scenario, {name: cfg}, (pair.forest, pair.gpr), rem, 1, ctx.seed)[name][0]
        rows.append({"scheme": name, "simulated_s": res.sim_duration, "wall_s": res.wall_time,
                     "sim_s_per_wall_s": res.sim_duration / res.wall_time,
                     "wall_s_per_sim_s": res.wall_time / res.sim_duration,
                     "transmissions": len(res.records)})
    _write_json(ctx.artifact("bench.json"), {"provenance": ctx.provenance(), "schemes": rows})
    speeds = ", ".join(f"{r['scheme']}={r['sim_s_per_wall_s']:.0f}x" for r in rows)
    return f"bench: {ctx.args.duration:g} s simulated per scheme, speed {speeds} real time"


# -- parser ----------------------------------------------------------------

def _widths(text):
    try:
        return [float(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad width list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON (default: shipped synthetic scenario)")
    common.add_argument("--workdir", default="hybridsim-run", help="artifact directory")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hybridsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    s = sub.add_parser("generate", parents=[common], help="synthetic measurement campaign")
    s.add_argument("--out", help="campaign CSV path (default: <workdir>/campaign.csv)")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("build-rem", parents=[common], help="radio environmental map")
    s.add_argument("--cell-width", type=float, help="cell width in meters")
    s.add_argument("--campaign", help="measurement CSV (default: <workdir>/campaign.csv)")
    s.set_defaults(func=cmd_build_rem)

    s = sub.add_parser("train", parents=[common], help="rate forest + derivation model")
    s.add_argument("--direction", choices=["ul", "dl"])
    s.add_argument("--campaign")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", parents=[common], help="seeded simulation runs")
    s.add_argument("--scheme", default="all", help="periodic, cat, mlcat, a config name, or all")
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--duration", type=float, help="override the trip duration (s)")
    s.add_argument("--direction", choices=["ul", "dl"])
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="cell-width sweep")
    s.add_argument("--widths", type=_widths, help="comma separated, e.g. 5,10,25,50,100,200")
    s.add_argument("--folds", type=int)
    s.add_argument("--direction", choices=["ul", "dl"], action="append")
    s.add_argument("--probe-trip", action="store_true",
                   help="measure the miss ratio along the configured trip")
    s.add_argument("--campaign")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("evaluate", parents=[common], help="model error and sim-vs-reference report")
    s.add_argument("--direction", choices=["ul", "dl"])
    s.add_argument("--scheme", default="all")
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--folds", type=int, default=10)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--campaign")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("bench", parents=[common], help="wall-clock cost per simulated second")
    s.add_argument("--duration", type=float, default=3600.0)
    s.add_argument("--scheme", default="all")
    s.add_argument("--direction", choices=["ul", "dl"])
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args)
        t0 = time.perf_counter()
        line = args.func(ctx)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    except (CliError, ConfigError, CampaignFormatError, NetworkError, FileNotFoundError,
            ValueError) as exc:
        print(f"hybridsim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
