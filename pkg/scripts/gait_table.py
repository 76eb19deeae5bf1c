"""Swimming efficiency of the reference gaits across a family of media.

    python3 scripts/gait_table.py --sigma-perp 1400 --ratios 0.1 0.214 0.3 0.5
"""
import argparse
import time

from granfin.fin import fin_preset
from granfin.rft import MediumModel
from granfin.scenarios import DEG, GaitParams, RobotSpec, run_swim

ROWS = [
    ("optimized", "origami-2.0mm", 60, -90, 0.065),
    ("symmetry 1", "origami-2.0mm", 30, -30, 0.065),
    ("symmetry 2", "origami-2.0mm", 30, -30, 0.075),
    ("asymmetry 1", "origami-2.0mm", 90, 0, 0.065),
    ("asymmetry 2", "origami-2.0mm", 90, 0, 0.075),
    ("rigid", "rigid", 60, -90, 0.065),
]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sigma-perp", type=float, default=1400.0)
    parser.add_argument("--ratios", type=float, nargs="+", default=[300 / 1400])
    parser.add_argument("--mode", choices=["sine", "constant"], default="sine")
    parser.add_argument("--cycles", type=int, default=4)
    args = parser.parse_args(argv)

    print(f"{'gait':<12} {'fin':<14} {'th1':>5} {'th2':>5} {'L_a mm':>7}"
          + "".join(f"{'eta@' + format(r, 'g'):>11}" for r in args.ratios))
    etas = {}
    start = time.perf_counter()
    for ratio in args.ratios:
        medium = MediumModel(args.sigma_perp, ratio * args.sigma_perp, mode=args.mode)
        for name, fin, t1, t2, la in ROWS:
            gait = GaitParams(t1 * DEG, t2 * DEG, arm_length=la, cycles=args.cycles)
            etas[name, ratio] = run_swim(RobotSpec(fin_preset(fin)), medium, gait).eta
    for name, fin, t1, t2, la in ROWS:
        cells = "".join(f"{etas[name, r]:>11.2%}" for r in args.ratios)
        print(f"{name:<12} {fin:<14} {t1:>5} {t2:>5} {la * 1e3:>7.0f}{cells}")
    print(f"# {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
