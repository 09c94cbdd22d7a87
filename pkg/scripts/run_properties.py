"""Randomised property suite over several seeds; writes one JSON file per seed.

    python scripts/run_properties.py --seeds 0 1 2 --instances 100 --out runs/properties
"""

import argparse
from pathlib import Path

from resagc.harness.properties import property_suite
from resagc.modelio import dump_json


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out", type=Path, default=Path("runs/properties"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    ok = True
    for seed in args.seeds:
        res = property_suite(seed, args.instances)
        dump_json(res, args.out / f"seed{seed}.json")
        ok &= res["ok"]
        cells = "  ".join(f"{k}={v['passed']}/{v['total']}" for k, v in res["sections"].items())
        print(f"seed {seed}: {'ok' if res['ok'] else 'FAILED'}  {cells}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
