"""Run every built-in case study and print a one-line summary per study.

    python scripts/run_case_studies.py --out runs --seed 0
"""

import argparse
import time
from pathlib import Path

from resagc.harness.study import CASE_STUDIES, run_case_study


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", choices=CASE_STUDIES, nargs="*")
    args = p.parse_args()
    failed = 0
    for name in args.only or CASE_STUDIES:
        t0 = time.perf_counter()
        r = run_case_study(name, args.seed, args.out / name)
        eps = ", ".join(f"{c['epsilon']:.4g}" if c["epsilon"] != "inf" else "inf" for c in r["contracts"])
        print(f"{name:10s} {r['status']:6s} iterations={r['trace']['iterations_used']} eps=[{eps}] "
              f"({time.perf_counter() - t0:.2f} s) -> {args.out / name}")
        failed += r["status"] != "ok"
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
