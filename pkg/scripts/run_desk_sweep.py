"""Sweep the two-speaker desk scene over algorithms, smoothing, dT and p.

Prints a compact E_bar table at p = 1% and writes sweep.csv / report.json.

    python scripts/run_desk_sweep.py --out out/desk
"""

import argparse
from pathlib import Path

from lsdd.cli import main
from lsdd.eval_harness import read_sweep_csv

ROOT = Path(__file__).resolve().parents[1]


def run(scene: Path, out: Path, seed: int | None) -> None:
    argv = ["sweep", "--scene", str(scene), "--out", str(out), "--smoothing", "none", "three", "nine",
            "--algorithms", "LSDD", "LSDDe", "dSDD", "dSDDe"]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if main(argv) != 0:
        raise SystemExit(1)
    rows = read_sweep_csv(out / "sweep.csv")
    print(f"{'alg':6s} {'R':>2s} " + " ".join(f"{dt:>7.0f}ms" for dt in (200, 300, 500)))
    for alg in ("LSDD", "LSDDe", "dSDD", "dSDDe"):
        for r in (0, 1, 4):
            vals = [
                next(x["E_bar_deg"] for x in rows
                     if x["algorithm"] == alg and x["smoothing_R"] == r and x["p"] == 1 and x["delta_T_ms"] == dt)
                for dt in (200, 300, 500)
            ]
            print(f"{alg:6s} {r:2d} " + " ".join(f"{v:9.2f}" for v in vals))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", type=Path, default=ROOT / "scenes" / "desk_two_speaker.json")
    ap.add_argument("--out", type=Path, default=Path("out/desk"))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    run(args.scene, args.out, args.seed)
