"""Command-line driver: ``distorder <subcommand> --config PATH [--out DIR] [--seed N] [--jobs N]``.

Subcommands write deterministic CSV files (header row, 17 significant
digits), gnuplot scripts for figure-style outputs and a ``run.json``
provenance record. Exit status: 0 ok, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjoint import data_misfit, gradient, solve_sensitivity
from .asymptotics import ContourParams, contour_P, contour_Q, eval_P, predict_large_t, predict_small_t
from .config import ConfigError, ExperimentConfig, load_config
from .forward import (
    ObservationTrace,
    add_noise,
    observe,
    read_trace,
    steady_observation,
    step_forward,
    write_trace,
)
from .fracweights import AlphaQuadrature, DistributedWeights, TimeGrid, WeightDistribution
from .inverse import cgm_recover, fit_bound

__all__ = ["main", "run", "write_csv", "emit_plot_script", "bounds_for_weight"]

SUBCOMMANDS = ("forward", "observe", "noise", "bounds", "recover", "asymptotics", "gradcheck")
PLOT_KINDS = ("smalltime", "largetime", "recovery", "error-history")


class SolverFailure(RuntimeError):
    pass


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> Path:
    rows = list(rows)
    if not rows:
        raise SolverFailure(f"refusing to write {path}: no data rows")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def emit_plot_script(kind: str, csv_paths, out_path, titles=None, offsets=None) -> Path:
    """Write a self-contained gnuplot script rendering ``csv_paths``.

    ``offsets`` (one per file) are subtracted from the second column before
    taking absolute values on the log-log asymptotic plots.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    csv_paths = [Path(p) for p in csv_paths]
    for p in csv_paths:
        if not p.exists():
            raise FileNotFoundError(p)
    out_path = Path(out_path)
    titles = titles or [p.stem for p in csv_paths]
    lines = [
        f"# {kind} plot",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 800,600",
        f"set output '{out_path.with_suffix('.png').name}'",
    ]
    rel = [os.path.relpath(p, out_path.parent) for p in csv_paths]
    if kind in ("smalltime", "largetime"):
        offsets = offsets or [0.0] * len(csv_paths)
        lines += ["set logscale xy", "set format y '%g'", "set xlabel 't'"]
        lines.append("set ylabel '|g(t) - g(0)|'" if kind == "smalltime" else "set ylabel '|g(t) - g_inf|'")
        parts = [
            f"'{p}' using 1:(abs($2 - ({_cell(o)}))) with lines title '{t}'"
            for p, o, t in zip(rel, offsets, titles)
        ]
        lines.append("plot " + ", \\\n     ".join(parts))
    elif kind == "recovery":
        lines += ["set xlabel 'alpha'", "set ylabel 'mu'"]
        parts = [f"'{p}' using 1:2 with linespoints title '{t}'" for p, t in zip(rel, titles)]
        lines.append("plot " + ", \\\n     ".join(parts))
    else:
        lines += ["set logscale y", "set xlabel 'k'", "set ylabel 'L2 error'"]
        lines.append(f"plot '{rel[0]}' using 1:4 with linespoints title 'error'")
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


# ---------------------------------------------------------------------------
# subcommand bodies


def _slug(mu: WeightDistribution, i: int) -> str:
    return mu.name or f"mu{i + 1}"


def bounds_for_weight(data: dict, index: int) -> dict:
    """Forward runs on the small- and large-time grids plus both fits for one weight."""
    cfg = ExperimentConfig(data)
    mu = cfg.sweep()[index]
    r = data["recover"]
    small = TimeGrid.geometric(float(r["small_t_min"]), float(r["small_T"]), int(r["per_decade"]))
    large = TimeGrid.geometric(float(r["large_t_min"]), float(r["large_T"]), int(r["per_decade"]))
    eps = float(data["noise"]["eps"])
    out = {"name": _slug(mu, index), "support": mu.support}
    for label, grid, win, target in (("small", small, r["upper_window"], "upper"),
                                     ("large", large, r["lower_window"], "lower")):
        spec = cfg.problem(mu=mu, grid=grid)
        tr = observe(step_forward(spec), spec)
        if eps > 0:
            tr = add_noise(tr, eps, cfg.seed + index)
        fit = fit_bound(tr, tuple(win), target, anchor=bool(r["anchor"]))
        out[label] = (tr.times, tr.values, fit)
        if label == "large":
            out["g_inf"] = steady_observation(spec)
    return out


def _run_forward(cfg: ExperimentConfig, out: Path, write_state: bool):
    spec = cfg.problem()
    sol = step_forward(spec)
    tr = observe(sol, spec)
    write_trace(out / "trace.csv", tr)
    files = ["trace.csv"]
    if write_state:
        x = spec.mesh.nodes
        write_csv(out / "state.csv", ["x", "u"], zip(x, sol.U[-1]))
        files.append("state.csv")
    return files


def _run_noise(cfg: ExperimentConfig, out: Path):
    src = out / "trace.csv"
    if not src.exists():
        raise ConfigError(f"{src} not found; run 'observe' first")
    tr = read_trace(src)
    noisy = add_noise(tr, float(cfg.data["noise"]["eps"]), cfg.seed)
    write_trace(out / "trace_noisy.csv", noisy)
    return ["trace_noisy.csv"]


def _run_bounds(cfg: ExperimentConfig, out: Path, jobs: int):
    weights = cfg.sweep()
    idx = range(len(weights))
    if jobs > 1 and len(weights) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(bounds_for_weight, [cfg.data] * len(weights), idx))
    else:
        results = [bounds_for_weight(cfg.data, i) for i in idx]
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    rows, fits, small_files, large_files, g0s, ginfs = [], [], [], [], [], []
    for res in results:
        name = res["name"]
        for label in ("small", "large"):
            t, g, fit = res[label]
            path = tdir / f"{name}_{label}.csv"
            write_trace(path, ObservationTrace(t, g))
            fits.append((name, fit.target, fit.window[0], fit.window[1], fit.b, fit.c0, fit.c1,
                         fit.residual, fit.rel_residual))
        b1, b2 = res["support"]
        rows.append((name, res["large"][2].b, b1, res["small"][2].b, b2))
        small_files.append(tdir / f"{name}_small.csv")
        large_files.append(tdir / f"{name}_large.csv")
        g0s.append(float(res["small"][1][0]))
        ginfs.append(res["g_inf"] if res["g_inf"] is not None else 0.0)
    write_csv(out / "bounds.csv", ["mu_name", "b1_est", "b1_true", "b2_est", "b2_true"], rows)
    write_csv(out / "bounds_fit.csv",
              ["mu_name", "target", "t1", "t2", "b", "c0", "c1", "residual", "rel_residual"], fits)
    names = [r[0] for r in rows]
    emit_plot_script("smalltime", small_files, out / "smalltime.gp", names, g0s)
    emit_plot_script("largetime", large_files, out / "largetime.gp", names, ginfs)
    return ["bounds.csv", "bounds_fit.csv", "smalltime.gp", "largetime.gp", "traces/"]


def _run_recover(cfg: ExperimentConfig, out: Path, jobs: int):
    r = cfg.data["recover"]
    if r["mode"] == "bounds":
        return _run_bounds(cfg, out, jobs)
    spec = cfg.problem()
    opts = cfg.cgm_options()
    truth = None
    if r["data"]:
        data = read_trace(r["data"])
    else:
        truth = cfg.weight()
        exact = observe(step_forward(spec), spec)
        data = add_noise(exact, opts.eps, cfg.seed)
    write_trace(out / "trace.csv", data)
    state = cgm_recover(spec, data, opts, mu_true=truth)
    write_csv(out / "iterations.csv", ["k", "J", "residual", "error", "step"], state.log_rows())
    if state.stop_reason == "discrepancy" or truth is None:
        final = state.mu
    else:
        final = state.best_mu
    write_csv(out / "weight_recovered.csv", ["alpha", "mu"], zip(state.alpha, final))
    files = ["trace.csv", "iterations.csv", "weight_recovered.csv", "recovery.gp"]
    plots = [out / "weight_recovered.csv"]
    titles = ["recovered"]
    if truth is not None:
        write_csv(out / "weight_true.csv", ["alpha", "mu"], zip(state.alpha, truth.density(state.alpha)))
        plots.insert(0, out / "weight_true.csv")
        titles.insert(0, "exact")
        emit_plot_script("error-history", [out / "iterations.csv"], out / "error-history.gp")
        files += ["weight_true.csv", "error-history.gp"]
    emit_plot_script("recovery", plots, out / "recovery.gp", titles)
    summary = {
        "stop_reason": state.stop_reason,
        "stop_index": state.stop_index,
        "best_index": state.best_index,
        "best_error": None if truth is None else state.best_error,
        "iterations": len(state.k),
    }
    (out / "recovery.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return files + ["recovery.json"]


def _run_asymptotics(cfg: ExperimentConfig, out: Path):
    a = cfg.data["asymptotics"]
    mu = cfg.weight()
    cp = ContourParams(delta=float(a["delta"]), theta=a["theta"])
    rows = []
    for t in sorted(float(v) for v in a["times"]):
        P = eval_P(t, mu)
        Qc = contour_Q(t, mu, cp)
        Pc = contour_P(t, mu, cp)
        if t < 1:
            pred = predict_small_t(t, mu, float(a["small_constant"]), cp)
        else:
            pred = predict_large_t(t, mu, float(a["large_constant"]), cp)
        rows.append((t, P, Qc, Pc, pred))
    write_csv(out / "asymptotics.csv", ["t", "P", "Q_contour", "P_contour", "predicted"], rows)
    return ["asymptotics.csv"]


def _run_gradcheck(cfg: ExperimentConfig, out: Path):
    gc = cfg.data["gradcheck"]
    if cfg.data["problem"]["bc"] != "neumann":
        raise ConfigError("gradcheck needs a Neumann problem")
    T = float(cfg.data["time"]["T"])
    grid = TimeGrid.uniform(T, int(gc["N"]))
    n_alpha = int(gc["n_alpha"])
    data_cfg = ExperimentConfig({**cfg.data, "problem": {**cfg.data["problem"], "M": int(gc["M"])}})
    spec_true = data_cfg.problem(grid=grid)
    g = observe(step_forward(spec_true), spec_true)
    quad = AlphaQuadrature.trapezoid(n_alpha)
    mu0 = np.asarray(
        WeightDistribution.from_expr(cfg.data["recover"]["initial"], support=(0, 1)).density(quad.nodes)
    )
    mu0[0] = mu0[-1] = 0.0
    spec0 = spec_true.with_weight(WeightDistribution.from_samples(mu0), quad)
    J, G, sol, r = gradient(spec0, g)
    w = grid.trapezoid_weights()
    rng = np.random.default_rng(cfg.seed)
    step = float(gc["fd_step"])
    rows = []
    for i in range(int(gc["directions"])):
        h = rng.standard_normal(quad.nodes.size)
        h[0] = h[-1] = 0.0
        adj = G.dot(h)
        sens = solve_sensitivity(spec0, sol, h)
        lin = float(np.sum(w * r * sens.U[:, 0 if spec0.observe.side == "left" else spec0.mesh.M]))
        Jp = _misfit(spec0, mu0 + step * h, quad, g)
        Jm = _misfit(spec0, mu0 - step * h, quad, g)
        fd = (Jp - Jm) / (2 * step)
        rows.append((i, adj, fd, abs(adj - fd) / max(abs(fd), 1e-300), lin,
                     abs(adj - lin) / max(abs(lin), 1e-300)))
    write_csv(out / "gradcheck.csv",
              ["direction", "adjoint", "finite_difference", "rel_error", "sensitivity", "duality_error"],
              rows)
    return ["gradcheck.csv"]


def _misfit(spec, values, quad, data) -> float:
    """``J`` at raw sample values; signed probes bypass the weight's positivity check."""
    inside = (quad.nodes > 0) & (quad.nodes < 1)
    dw = DistributedWeights(spec.grid, quad.nodes[inside], (quad.weights * values)[inside])
    return data_misfit(spec, step_forward(spec, weights=dw), data)[1]


# ---------------------------------------------------------------------------


def _provenance(cfg: ExperimentConfig, sub: str, files) -> dict:
    return {
        "subcommand": sub,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "files": sorted(files),
        "versions": {
            "distorder": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def run(sub: str, config_path, out=None, seed: int | None = None, jobs: int = 1) -> int:
    try:
        if sub not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {sub!r}")
        if jobs < 1:
            raise ConfigError("--jobs must be positive")
        cfg = load_config(config_path).with_seed(seed)
        out = Path(out or cfg.data["output"]["dir"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create {out}: {exc}") from exc
        if sub in ("forward", "observe"):
            files = _run_forward(cfg, out, sub == "forward")
        elif sub == "noise":
            files = _run_noise(cfg, out)
        elif sub == "bounds":
            files = _run_bounds(cfg, out, jobs)
        elif sub == "recover":
            files = _run_recover(cfg, out, jobs)
        elif sub == "asymptotics":
            files = _run_asymptotics(cfg, out)
        else:
            files = _run_gradcheck(cfg, out)
        (out / "run.json").write_text(
            json.dumps(_provenance(cfg, sub, files), indent=2, sort_keys=True) + "\n"
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, FileNotFoundError, SolverFailure) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="distorder", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML or JSON experiment file")
    ap.add_argument("--out", default=None, help="output directory (overrides [output].dir)")
    ap.add_argument("--seed", type=int, default=None, help="noise seed (overrides [noise].seed)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    args = ap.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.seed, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
