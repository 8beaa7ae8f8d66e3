"""Weight recovery errors across noise levels for both recovery examples.

Each (case, noise level) pair runs in its own worker and writes its
iteration log to its own subdirectory; ``noise_sweep.csv`` collects the best
iterate (oracle stopping) and the discrepancy-principle stop.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from distorder.cli import write_csv
from distorder.config import load_config
from distorder.forward import add_noise, observe, step_forward
from distorder.inverse import cgm_recover

ROOT = Path(__file__).resolve().parent.parent
LEVELS = (0.0, 1e-3, 3e-3, 1e-2, 3e-2, 5e-2)
CASES = {"i": "recover_smooth", "ii": "recover_tent"}


def one_run(case: str, eps: float, k_max: int, out: str):
    cfg = load_config(ROOT / "configs" / f"{CASES[case]}.toml")
    spec = cfg.problem()
    truth = cfg.weight()
    data = add_noise(observe(step_forward(spec), spec), eps, cfg.seed)
    base = replace(cfg.cgm_options(), eps=eps, k_max=k_max)
    oracle = cgm_recover(spec, data, replace(base, stop="none"), mu_true=truth)
    dp = cgm_recover(spec, data, replace(base, stop="discrepancy"), mu_true=truth)
    sub = Path(out) / f"case_{case}_eps_{eps:g}"
    sub.mkdir(parents=True, exist_ok=True)
    write_csv(sub / "iterations.csv", ["k", "J", "residual", "error", "step"], oracle.log_rows())
    dp_err = dp.error[dp.stop_index] if dp.stop_index is not None else dp.error[-1]
    return (case, eps, oracle.best_error, oracle.best_index, dp_err, dp.stop_index, dp.stop_reason)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=ROOT / "out" / "noise_sweep")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--k-max", type=int, default=100)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(c, e) for c in CASES for e in LEVELS]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(one_run, *zip(*jobs), [args.k_max] * len(jobs), [str(out)] * len(jobs)))
    print(f"{'case':4s} {'eps':>7s} {'best err':>10s} {'k':>4s} {'dp err':>10s} {'k':>4s}  stop")
    for case, eps, be, bk, de, dk, why in rows:
        print(f"{case:4s} {eps:7.0e} {be:10.3e} {bk:4d} {de:10.3e} {dk if dk is not None else -1:4d}  {why}")
    write_csv(out / "noise_sweep.csv",
              ["case", "eps", "best_error", "best_index", "dp_error", "dp_index", "dp_reason"], rows)


if __name__ == "__main__":
    main()
