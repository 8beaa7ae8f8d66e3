"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
written to the terminal even when output capture is on.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.special import erfcx

from distorder.asymptotics import check_limits, contour_integral, contour_P, contour_Q, ContourParams, eval_P
from distorder.cli import bounds_for_weight, run
from distorder.config import load_config
from distorder.fem1d import BoundarySpec
from distorder.forward import ObservationTrace, ProblemSpec, add_noise, observe, step_forward, trace_l2
from distorder.fracweights import L1Table, TimeGrid, WeightDistribution, _l1_rows_nonuniform
from distorder.inverse import cgm_recover, loglog_slope

from oracles import caputo_of_t

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# criterion 1
C1_TOL_UNIFORM = 1e-12
C1_TOL_NONUNIFORM = 1e-13
C1_BUDGET = 1.0
# criterion 2
C2_TOL = 1e-3
C2_MIN_ORDER = 0.9
C2_BUDGET = 30.0
# criterion 3
C3_TOL_HANKEL = 1e-8
C3_TOL_CAUCHY = 1e-10
C3_TOL_DELTA = 1e-6
C3_BUDGET = 5.0
# criterion 4
C4_BAND = (1e-2, 1e2)
C4_BUDGET = 10.0
# criterion 5
C5_AGREE = 0.05
C5_SEPARATE = 0.1
C5_BUDGET = 300.0
# criterion 6
C6_TOL = 0.10
C6_LOWER = {"mu1": 0.30, "mu2": 0.30, "mu3": 0.27, "mu4": 0.48, "mu5": 0.66}
C6_UPPER = {"mu1": 0.75, "mu2": 0.55, "mu3": 0.16, "mu4": 0.75, "mu5": 0.76}
C6_BUDGET = 600.0
# criterion 7
C7_TOL_FD = 1e-3
C7_TOL_DUAL = 1e-8
C7_BUDGET = 120.0
# criterion 8
C8_K = 50
C8_NOISELESS = {"i": 1e-2, "ii": 6e-2}
C8_NOISY_EPS, C8_NOISY_TOL = 1e-2, 1e-1
C8_SEMI_EPS = 3e-2
RECOVERY_CONFIGS = {"i": "recover_smooth", "ii": "recover_tent"}
C8_BUDGET = 1200.0


@pytest.fixture
def report(request):
    tr = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(criterion: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
        return ok

    return emit


def test_criterion_1_weight_kernel(report):
    t0 = time.perf_counter()
    grid = TimeGrid.uniform(1.0, 64)
    alphas = [0.25, 0.5, 0.75]
    tab = L1Table(grid, alphas)
    worst = 0.0
    for n in range(1, 65):
        got = tab.apply(n, grid.nodes)
        ref = np.array([caputo_of_t(grid.nodes[n], a) for a in alphas])
        worst = max(worst, float(np.max(np.abs(got - ref) / np.abs(ref))))
    gap = 0.0
    for n in range(1, 65):
        # general-grid formula evaluated on equal spacings
        a, b = tab.rows(n), _l1_rows_nonuniform(grid.nodes, n, np.array(alphas))
        gap = max(gap, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
    dt = time.perf_counter() - t0
    ok = worst <= C1_TOL_UNIFORM and gap <= C1_TOL_NONUNIFORM and dt < C1_BUDGET
    assert report(1, ok, f"uniform rel err {worst:.2e} (<= {C1_TOL_UNIFORM:g}), "
                         f"nonuniform vs uniform {gap:.2e} (<= {C1_TOL_NONUNIFORM:g}), {dt:.2f}s")


def _single_order(N):
    spec = ProblemSpec.build(M=4, a="1", q="1", bc=BoundarySpec.neumann(), u0="1",
                             mu=WeightDistribution.from_atoms([[0.5, 1.0]]), grid=TimeGrid.uniform(0.5, N))
    return observe(step_forward(spec), spec)


def test_criterion_2_single_order_reduction(report):
    t0 = time.perf_counter()
    sols = {N: _single_order(N) for N in (1024, 2048, 4096)}
    fine = sols[4096]
    exact = erfcx(np.sqrt(fine.times))
    rel = trace_l2(fine.times, fine.values - exact) / trace_l2(fine.times, exact)
    pointwise = float(np.max(np.abs(fine.values - exact) / exact))

    def diff(a, b):
        x, y = sols[a], sols[b]
        return trace_l2(x.times, x.values - y.values[:: b // a])

    order = math.log2(diff(1024, 2048) / diff(2048, 4096))
    dt = time.perf_counter() - t0
    ok = rel <= C2_TOL and order >= C2_MIN_ORDER and dt < C2_BUDGET
    assert report(2, ok, f"relative L2(0,T) error {rel:.2e} at N=4096 (<= {C2_TOL:g}; pointwise max {pointwise:.2e}), "
                         f"self-convergence order {order:.3f} (>= {C2_MIN_ORDER}), {dt:.2f}s")


def test_criterion_3_contour_oracle(report):
    t0 = time.perf_counter()
    hq = hp = 0.0
    for a in (0.3, 0.5, 0.8):
        mu = WeightDistribution.from_atoms([[a, 1.0]])
        hq = max(hq, abs(contour_Q(1.0, mu) * math.gamma(a) - 1.0))
        hp = max(hp, abs(contour_P(1.0, mu) * math.gamma(-a) - 1.0))
    mu = WeightDistribution.indicator(0.2, 0.8)
    cauchy = abs(contour_integral(np.ones_like, mu, return_complex=True))
    dv = 0.0
    for t in (1e-3, 1.0, 1e3):
        ref_q, ref_p = contour_Q(t, mu), contour_P(t, mu)
        for delta in (0.25, 0.5, 2.0, 4.0):
            cp = ContourParams(delta=delta)
            dv = max(dv, abs(contour_Q(t, mu, cp) / ref_q - 1), abs(contour_P(t, mu, cp) / ref_p - 1))
    dt = time.perf_counter() - t0
    ok = max(hq, hp) <= C3_TOL_HANKEL and cauchy <= C3_TOL_CAUCHY and dv <= C3_TOL_DELTA and dt < C3_BUDGET
    assert report(3, ok, f"Hankel 1/Gamma(a) {hq:.1e}, 1/Gamma(-a) {hp:.1e} (<= {C3_TOL_HANKEL:g}), "
                         f"Cauchy {cauchy:.1e} (<= {C3_TOL_CAUCHY:g}), delta drift {dv:.1e} "
                         f"(<= {C3_TOL_DELTA:g}), {dt:.2f}s")


def test_criterion_4_moment_properties(report):
    t0 = time.perf_counter()
    lo, hi = math.inf, 0.0
    for b1, b2 in ((0.2, 0.8), (0.2, 0.6), (0.4, 0.8)):
        mu = WeightDistribution.indicator(b1, b2)
        for t in np.geomspace(1e-3, 1.0, 13):
            v = abs(contour_Q(t, mu)) * eval_P(t, mu)
            lo, hi = min(lo, v), max(hi, v)
        for t in np.geomspace(1.0, 1e3, 13):
            v = abs(contour_P(t, mu)) / eval_P(t, mu)
            lo, hi = min(lo, v), max(hi, v)
    mu1 = WeightDistribution.indicator(0.2, 0.8)
    limits = {b: check_limits(mu1, b)["consistent"] for b in (0.1, 0.3, 0.7, 0.9)}
    dt = time.perf_counter() - t0
    ok = C4_BAND[0] <= lo and hi <= C4_BAND[1] and all(limits.values()) and dt < C4_BUDGET
    assert report(4, ok, f"sandwich ratios in [{lo:.3f}, {hi:.3f}] (band {C4_BAND}), "
                         f"limit signs {limits}, {dt:.2f}s")


@pytest.fixture(scope="module")
def bound_sweep():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "bounds_source.toml")
    res = [bounds_for_weight(cfg.data, i) for i in range(len(cfg.sweep()))]
    return res, time.perf_counter() - t0


def _spread(vals):
    return max(vals) - min(vals)


def _separation(group, others):
    return min(abs(o - g) for o in others for g in group)


def test_criterion_5_asymptotic_slopes(report, bound_sweep):
    res, dt = bound_sweep
    small, large = {}, {}
    for r in res:
        ts, gs, _ = r["small"]
        tl, gl, _ = r["large"]
        small[r["name"]] = loglog_slope(ObservationTrace(ts, gs), (1e-6, 1e-5), gs[0])
        large[r["name"]] = loglog_slope(ObservationTrace(tl, gl), (1e4, 1e5), r["g_inf"])
    s_in = [small[k] for k in ("mu1", "mu4", "mu5")]
    s_out = [small[k] for k in ("mu2", "mu3")]
    l_in = [large[k] for k in ("mu1", "mu2", "mu3")]
    l_out = [large[k] for k in ("mu4", "mu5")]
    sa, ss, la, ls = _spread(s_in), _separation(s_in, s_out), _spread(l_in), _separation(l_in, l_out)
    ok = sa <= C5_AGREE and ss >= C5_SEPARATE and la <= C5_AGREE and ls >= C5_SEPARATE and dt < C5_BUDGET
    fmt = lambda d: ", ".join(f"{k} {v:.3f}" for k, v in d.items())  # noqa: E731
    assert report(5, ok, f"small-t slopes [{fmt(small)}] spread {sa:.3f} sep {ss:.3f}; "
                         f"large-t slopes [{fmt(large)}] spread {la:.3f} sep {ls:.3f} "
                         f"(agree <= {C5_AGREE}, separate >= {C5_SEPARATE}), {dt:.1f}s")


def test_criterion_6_bound_estimates(report, bound_sweep):
    res, dt = bound_sweep
    rows = []
    for r in res:
        name = r["name"]
        lo_fit, up_fit = r["large"][2], r["small"][2]
        rows.append((name, "lower", lo_fit.b, C6_LOWER[name], lo_fit.rel_residual))
        rows.append((name, "upper", up_fit.b, C6_UPPER[name], up_fit.rel_residual))
    inside = [r for r in rows if abs(r[2] - r[3]) <= C6_TOL]
    missed = [r for r in rows if abs(r[2] - r[3]) > C6_TOL]
    # a missed column is acceptable only when its fit residual flags it
    flagged = all(m[4] > max((i[4] for i in inside if i[1] == m[1]), default=math.inf) for m in missed)
    ok = flagged and dt < C6_BUDGET
    desc = "; ".join(f"{n} {k[0]} {b:.3f}/{ref:.2f}" for n, k, b, ref, _ in rows)
    assert report(6, ok, f"{len(inside)}/{len(rows)} within +-{C6_TOL} [{desc}]"
                         f"{'' if not missed else ', misses flagged by residual' if flagged else ', miss not flagged'}, "
                         f"{dt:.1f}s")


def test_criterion_7_gradient(report, tmp_path):
    t0 = time.perf_counter()
    cfg = CONFIGS / "recover_smooth.toml"
    assert run("gradcheck", cfg, tmp_path) == 0
    g = np.loadtxt(tmp_path / "gradcheck.csv", delimiter=",", skiprows=1, ndmin=2)
    dt = time.perf_counter() - t0
    fd, dual = float(g[:, 3].max()), float(g[:, 5].max())
    ok = g.shape[0] == 5 and fd <= C7_TOL_FD and dual <= C7_TOL_DUAL and dt < C7_BUDGET
    assert report(7, ok, f"{g.shape[0]} directions, adjoint vs FD {fd:.2e} (<= {C7_TOL_FD:g}), "
                         f"duality {dual:.2e} (<= {C7_TOL_DUAL:g}), {dt:.2f}s")


def _recover(case: str, eps: float):
    cfg = load_config(CONFIGS / f"{RECOVERY_CONFIGS[case]}.toml")
    spec = cfg.problem()
    truth = cfg.weight()
    data = add_noise(observe(step_forward(spec), spec), eps, cfg.seed)
    opts = replace(cfg.cgm_options(), k_max=C8_K, eps=eps, stop="none")
    return cgm_recover(spec, data, opts, mu_true=truth)


def semiconvergent(err) -> bool:
    """Interior minimum, every later error above it, and a strictly rising tail."""
    e = np.asarray(err)
    k = int(np.argmin(e))
    if not 0 < k < e.size - 3:
        return False
    if not (e[0] > e[k] and np.all(e[k + 1 :] > e[k])):
        return False
    rises = np.diff(e[k:]) > 0
    tail = 0
    for r in rises[::-1]:
        if not r:
            break
        tail += 1
    return tail >= 3


def test_criterion_8_recovery(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for case, tol in C8_NOISELESS.items():
        st = _recover(case, 0.0)
        ok &= st.best_error <= tol and st.best_index <= C8_K
        parts.append(f"({case}) eps=0 best {st.best_error:.3e} at k={st.best_index} (<= {tol:g})")
    for case in C8_NOISELESS:
        st = _recover(case, C8_NOISY_EPS)
        ok &= st.best_error <= C8_NOISY_TOL
        parts.append(f"({case}) eps={C8_NOISY_EPS:g} best {st.best_error:.3e} at k={st.best_index} "
                     f"(<= {C8_NOISY_TOL:g})")
    for case in C8_NOISELESS:
        st = _recover(case, C8_SEMI_EPS)
        semi = semiconvergent(st.error)
        ok &= semi
        parts.append(f"({case}) eps={C8_SEMI_EPS:g} semiconvergent={semi} "
                     f"(min {st.best_error:.3e} at k={st.best_index} of {len(st.error) - 1})")
    dt = time.perf_counter() - t0
    ok &= dt < C8_BUDGET
    assert report(8, bool(ok), "; ".join(parts) + f", {dt:.1f}s")


def _csvs(d: Path):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*.csv"))}


def test_criterion_9_determinism(report, tmp_path):
    t0 = time.perf_counter()
    jobs = [
        ("forward", "recover_smooth.toml"),
        ("observe", "bounds_initial.toml"),
        ("noise", "bounds_initial.toml"),
        ("bounds", "bounds_source.toml"),
        ("recover", "recover_tent.toml"),
        ("asymptotics", "asymptotics_mu1.toml"),
        ("gradcheck", "recover_smooth.toml"),
    ]
    same, total = [], 0
    for sub, cfg in jobs:
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / rep / sub
            if sub == "noise":
                assert run("observe", CONFIGS / cfg, out, seed=7) == 0
            assert run(sub, CONFIGS / cfg, out, seed=7) == 0
            outs.append(_csvs(out))
        total += len(outs[0])
        same.append(bool(outs[0]) and outs[0] == outs[1])
    dt = time.perf_counter() - t0
    ok = all(same)
    assert report(9, ok, f"{sum(same)}/{len(jobs)} subcommands byte-identical across two runs "
                         f"({total} CSV files), {dt:.1f}s")
