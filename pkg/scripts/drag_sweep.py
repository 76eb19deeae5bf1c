"""Steady drag forces of every fin preset at a range of carriage speeds.

Prints power and recovery stroke forces and the steady first-joint angle, a
quick way to see which fins are rate independent in a given medium.
"""
import argparse

import numpy as np

from granfin.fin import fin_preset, load_presets
from granfin.integrate import IntegratorConfig
from granfin.rft import MediumModel
from granfin.scenarios import DragProtocol, run_drag


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--speeds", type=float, nargs="+", default=[0.01, 0.03, 0.05])
    parser.add_argument("--amplitude", type=float, default=0.2)
    parser.add_argument("--mode", choices=["sine", "constant"], default="sine")
    args = parser.parse_args(argv)

    medium = MediumModel(1400.0, 300.0, mode=args.mode)
    print(f"{'fin':<14} {'v mm/s':>7} {'F_power N':>10} {'F_recov N':>10} {'recov g1 deg':>11}")
    for name in load_presets():
        for v in args.speeds:
            res = run_drag(fin_preset(name), medium, DragProtocol(args.amplitude, v, cycles=2),
                           IntegratorConfig(decimation=20))
            g1 = np.degrees(abs(res.recovery_gamma[0]))
            print(f"{name:<14} {v * 1e3:>7.0f} {res.steady_power:>10.4f} {res.steady_recovery:>10.4f} {g1:>11.2f}")


if __name__ == "__main__":
    main()
