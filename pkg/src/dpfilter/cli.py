"""Command-line front end.

Commands: design, simulate, evaluate, example-paper.  Every run writes a
manifest (resolved config, seed, tool version, config hash) and all numeric
CSV output uses 17 significant digits with LF line endings, so reruns with
the same manifest are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numeric or design error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, MechanismSpec, load_config, parse_config
from .design import (
    DfReconstruction,
    MechanismDesign,
    design_df,
    design_df_prefilter_variants,
    design_lmmse,
    design_lzf,
    lmmse_theoretical_mse,
    lzf_theoretical_mse,
    solve_waterfill_lmmse,
    WaterfillProblem,
)
from .lti import FrequencyGrid, freq_response, h2_norm
from .privacy import kappa
from .runtime import MechanismInstance, run as run_stream, trace_to_csv
from .simulate import monte_carlo, report_to_csv, report_to_text

ENV_OUT = "DPFILTER_OUT"

PAPER_EXAMPLE_CONFIG = {
    "filter": {"num": [1.0, 0.995], "den": [1.0, -0.995]},
    "privacy": {"epsilon": 1.0986122886681098, "delta": 0.05, "d": 1},
    "source": {"kind": "markov", "p_stay": 0.75, "values": [-1.0, 1.0]},
    "psd": "from-source",
    "run": {"T": 100_000, "replications": 20},
}


def _fmt(x) -> str:
    return f"{x:.17g}"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(ENV_OUT)
    if not out:
        raise ConfigError("config: no output directory (use --out or "
                          f"set {ENV_OUT})")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, raw_config: dict, seed: int,
                    jobs: int) -> None:
    canonical = json.dumps(raw_config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "config": raw_config,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": seed,
        "jobs": jobs,
        "version": __version__,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    (out / "config_resolved.json").write_text(
        json.dumps(raw_config, sort_keys=True, indent=2) + "\n")


def _build_design(cfg: ExperimentConfig) -> MechanismDesign:
    mech = cfg.mechanism
    grid = FrequencyGrid.refined(mech.grid_n)
    if mech.kind == "lzf":
        return design_lzf(cfg.filter, cfg.privacy, fir_length=mech.fir_length,
                          grid=grid)
    if mech.kind in ("lmmse-noncausal", "lmmse-causal"):
        return design_lmmse(cfg.filter, cfg.psd, cfg.privacy,
                            fir_length=mech.fir_length, grid=grid,
                            causal=(mech.kind == "lmmse-causal"),
                            fir_half_length=mech.fir_half_length)
    g_df, g_lm = design_df_prefilter_variants(cfg.filter, cfg.psd, cfg.privacy,
                                              grid=grid, fir_length=mech.fir_length)
    g = g_lm if mech.kind == "df-lmmse-prefilter" else g_df
    return design_df(cfg.filter, cfg.psd, g, params=cfg.privacy,
                     delay=mech.delay, n_forward=mech.n_forward,
                     n_feedback=mech.n_feedback, decision=mech.decision,
                     output_mode=mech.output_mode)


def _design_csv(design: MechanismDesign, grid: FrequencyGrid, path: Path) -> None:
    w = grid.omegas
    g_mag = np.abs(freq_response(design.prefilter_g, grid))
    recon = design.reconstruction
    if isinstance(recon, DfReconstruction):
        h_mag = np.abs(freq_response(recon.h1, grid))
        b = np.concatenate([[1.0], recon.h2])
        b_mag = np.abs(freq_response(b, grid))
    else:
        h_mag = np.abs(freq_response(recon.h, grid))
        b_mag = None
    with open(path, "w", newline="\n") as fh:
        fh.write("omega,g_mag,h_mag,b_mag\n")
        for i in range(w.size):
            b_val = "" if b_mag is None else _fmt(b_mag[i])
            fh.write(f"{_fmt(w[i])},{_fmt(g_mag[i])},{_fmt(h_mag[i])},{b_val}\n")


def _design_summary(design: MechanismDesign) -> str:
    cal = design.calibration
    lines = [
        f"mechanism: {design.kind}",
        f"kappa: {_fmt(cal.kappa)}",
        f"sigma: {_fmt(cal.sigma)}",
        f"prefilter_h2_norm: {_fmt(float(np.linalg.norm(design.prefilter_g)))}",
        f"prefilter_taps: {design.prefilter_g.size}",
        f"release_delay: {design.release_delay}",
    ]
    if design.theoretical_mse is not None:
        lines.append(f"theoretical_mse: {_fmt(design.theoretical_mse)}")
        lines.append(f"theoretical_rmse: {_fmt(float(np.sqrt(design.theoretical_mse)))}")
    if design.ideal_mse is not None:
        lines.append(f"ideal_mse: {_fmt(design.ideal_mse)}")
    if design.realized_mse is not None:
        lines.append(f"realized_mse: {_fmt(design.realized_mse)}")
    recon = design.reconstruction
    if isinstance(recon, DfReconstruction) and recon.detector_mmse is not None:
        lines.append(f"detector_mmse: {_fmt(recon.detector_mmse)}")
        lines.append(f"output_mode: {recon.output_mode}")
    return "\n".join(lines) + "\n"


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    design = _build_design(cfg)
    grid = FrequencyGrid.refined(cfg.mechanism.grid_n)
    _design_csv(design, grid, out / "design.csv")
    (out / "summary.txt").write_text(_design_summary(design))
    _write_manifest(out, "design", cfg.raw, args.seed, 1)
    print(_design_summary(design), end="")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    design = _build_design(cfg)
    report = monte_carlo(design, cfg.source, T=cfg.run.T,
                         replications=cfg.run.replications, seed=args.seed,
                         mean=cfg.source_mean(), jobs=args.jobs)
    (out / "report.txt").write_text(report_to_text(report))
    report_to_csv(report, out / "report.csv")
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for rep in range(min(cfg.run.replications, args.max_traces)):
        src_rng = np.random.default_rng([args.seed, rep, 0])
        u = cfg.source.sample(cfg.run.T, src_rng)
        inst = MechanismInstance(design, mean=cfg.source_mean(),
                                 seed=(args.seed, rep),
                                 rng=np.random.default_rng([args.seed, rep, 1]))
        rep_report = run_stream(inst, u, discard=min(10_000, cfg.run.T // 2))
        trace_to_csv(rep_report, traces / f"rep_{rep}.csv")
    _write_manifest(out, "simulate", cfg.raw, args.seed, args.jobs)
    print(report_to_text(report), end="")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    kap = kappa(cfg.privacy)
    lines = [f"kappa: {_fmt(kap)}"]
    lzf = lzf_theoretical_mse(cfg.filter, cfg.privacy, grid_n=cfg.mechanism.grid_n)
    lines.append(f"lzf_theoretical_mse: {_fmt(lzf)}")
    lines.append(f"lzf_theoretical_rmse: {_fmt(float(np.sqrt(lzf)))}")
    if cfg.psd is not None:
        grid = FrequencyGrid.refined(cfg.mechanism.grid_n)
        prob = WaterfillProblem.from_design_data(cfg.filter, cfg.psd, cfg.privacy, grid)
        x = solve_waterfill_lmmse(prob)
        lm = lmmse_theoretical_mse(cfg.filter, cfg.psd, x, cfg.privacy, grid)
        lines.append(f"lmmse_theoretical_mse: {_fmt(lm)}")
        lines.append(f"lmmse_theoretical_rmse: {_fmt(float(np.sqrt(lm)))}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args)
        (out / "evaluate.txt").write_text(text)
        _write_manifest(out, "evaluate", cfg.raw, args.seed, 1)
    print(text, end="")
    return 0


PAPER_MECHANISMS = (
    ("lzf", {"kind": "lzf"}),
    ("lmmse-noncausal", {"kind": "lmmse-noncausal"}),
    ("df-optimized-prefilter", {"kind": "df-optimized-prefilter", "delay": 5}),
    ("df-lmmse-prefilter", {"kind": "df-lmmse-prefilter", "delay": 5}),
)


def cmd_example_paper(args) -> int:
    out = _out_dir(args)
    rows = []
    for label, mech in PAPER_MECHANISMS:
        raw = dict(PAPER_EXAMPLE_CONFIG)
        raw["mechanism"] = dict(mech)
        raw["run"] = {"T": args.t, "replications": args.reps}
        cfg = parse_config(raw)
        sub = out / label
        sub.mkdir(parents=True, exist_ok=True)
        design = _build_design(cfg)
        grid = FrequencyGrid.refined(cfg.mechanism.grid_n)
        _design_csv(design, grid, sub / "design.csv")
        (sub / "summary.txt").write_text(_design_summary(design))
        report = monte_carlo(design, cfg.source, T=cfg.run.T,
                             replications=cfg.run.replications,
                             seed=args.seed, mean=cfg.source_mean(),
                             jobs=args.jobs,
                             discard=min(10_000, cfg.run.T // 2))
        (sub / "report.txt").write_text(report_to_text(report))
        report_to_csv(report, sub / "report.csv")
        traces = sub / "traces"
        traces.mkdir(exist_ok=True)
        for rep in range(min(cfg.run.replications, args.max_traces)):
            src_rng = np.random.default_rng([args.seed, rep, 0])
            u = cfg.source.sample(cfg.run.T, src_rng)
            inst = MechanismInstance(design, mean=cfg.source_mean(),
                                     seed=(args.seed, rep),
                                     rng=np.random.default_rng([args.seed, rep, 1]))
            rep_report = run_stream(inst, u, discard=min(10_000, cfg.run.T // 2))
            trace_to_csv(rep_report, traces / f"rep_{rep}.csv")
        _write_manifest(sub, "simulate", raw, args.seed, args.jobs)
        lo, hi = report.rmse_ci95()
        rows.append({
            "label": label,
            "theoretical_rmse": ("" if report.theoretical_mse is None
                                 else _fmt(float(np.sqrt(report.theoretical_mse)))),
            "empirical_rmse": _fmt(report.empirical_rmse),
            "rmse_ci95_lo": _fmt(lo),
            "rmse_ci95_hi": _fmt(hi),
        })
    with open(out / "comparison.csv", "w", newline="\n") as fh:
        cols = ["label", "theoretical_rmse", "empirical_rmse",
                "rmse_ci95_lo", "rmse_ci95_hi"]
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(row[c] for c in cols) + "\n")
    manifest_cfg = dict(PAPER_EXAMPLE_CONFIG)
    manifest_cfg["run"] = {"T": args.t, "replications": args.reps}
    _write_manifest(out, "example-paper", manifest_cfg, args.seed, args.jobs)
    for row in rows:
        print(f"{row['label']}: empirical_rmse={row['empirical_rmse']}"
              + (f" theoretical_rmse={row['theoretical_rmse']}"
                 if row["theoretical_rmse"] else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpfilter",
        description="Design and run differentially private approximations "
                    "of an LTI filter over event streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help=f"output directory (or ${ENV_OUT})")
        p.add_argument("--seed", type=int, default=12345, help="base seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel replications")
        p.add_argument("--max-traces", type=int, default=3,
                       help="replication traces to write as CSV")

    p = sub.add_parser("design", help="design a mechanism, write design.csv + summary")
    common(p)
    p.set_defaults(func=cmd_design)
    p = sub.add_parser("simulate", help="Monte Carlo simulation of a mechanism")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("evaluate", help="theoretical error figures only")
    common(p)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("example-paper",
                       help="run the bundled four-mechanism comparison scenario")
    common(p, needs_config=False)
    p.add_argument("--t", type=int, default=100_000, help="samples per replication")
    p.add_argument("--reps", type=int, default=20, help="replications")
    p.set_defaults(func=cmd_example_paper)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
