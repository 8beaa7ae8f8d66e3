"""Support-bound estimates for the indicator weights, next to the true bounds.

Runs the ``bounds`` pipeline for each config given and prints a table of
``b1`` (late-time fit) and ``b2`` (early-time fit) with fit residuals.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from distorder.cli import bounds_for_weight, write_csv
from distorder.config import load_config

ROOT = Path(__file__).resolve().parent.parent
DEFAULT = [ROOT / "configs" / "bounds_initial.toml", ROOT / "configs" / "bounds_source.toml"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", default=DEFAULT)
    ap.add_argument("--out", default=ROOT / "out" / "bound_table")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for path in args.configs:
        cfg = load_config(path)
        n = len(cfg.sweep())
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            res = list(pool.map(bounds_for_weight, [cfg.data] * n, range(n)))
        rows = []
        print(Path(path).stem)
        print(f"  {'weight':8s} {'b1 est':>8s} {'b1':>6s} {'res':>9s} {'b2 est':>8s} {'b2':>6s} {'res':>9s}")
        for r in res:
            lo, up = r["large"][2], r["small"][2]
            b1, b2 = r["support"]
            rows.append((r["name"], lo.b, b1, lo.rel_residual, up.b, b2, up.rel_residual))
            print(f"  {r['name']:8s} {lo.b:8.3f} {b1:6.2f} {lo.rel_residual:9.2e} "
                  f"{up.b:8.3f} {b2:6.2f} {up.rel_residual:9.2e}")
        write_csv(out / f"{Path(path).stem}.csv",
                  ["mu_name", "b1_est", "b1_true", "b1_rel_residual", "b2_est", "b2_true", "b2_rel_residual"],
                  rows)


if __name__ == "__main__":
    main()
