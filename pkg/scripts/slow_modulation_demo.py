#!/usr/bin/env python3
"""Slow environment-rate modulation: the two witnesses disagree.

Writes a CSV with the fully integrated trace-distance decay factor next to
its adiabatic prediction over one modulation period, plus the random-scheme
past-future correlation at a late time pair (which stays at zero: the
environment never responds to the system).
"""

import argparse
import sys

import numpy as np

from qflow import (
    DepolarizingModel,
    TimeGrid,
    adiabatic_weight,
    cpf_grid,
    reference_measurements,
    sine_modulation,
    trace_distance_series,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--amplitude", type=float, default=0.5)
    parser.add_argument("--frequency", type=float, default=0.01)
    parser.add_argument("--out", default="out/slow_modulation.csv")
    args = parser.parse_args()

    b = sine_modulation(args.amplitude, args.frequency)
    model = DepolarizingModel(gamma=1.0, phi=1.0, modulation=b,
                              modulation_bound=args.amplitude * args.frequency)
    period = 2 * np.pi / args.frequency
    grid = TimeGrid(times=np.arange(0.0, period + 1e-9, 2.0), step=0.02)

    up = np.diag([1.0, 0.0]).astype(complex)
    down = np.diag([0.0, 1.0]).astype(complex)
    trace = trace_distance_series(model, up, down, grid=grid)
    w_ad = adiabatic_weight(1.0, 1.0, b, grid.times)
    d_ad = np.abs(4.0 * w_ad - 1.0) / 3.0

    rho0s, specs = reference_measurements()
    res = cpf_grid(model, rho0s, None, specs, [period / 4.0], [30.0],
                   scheme="r", step=0.02)

    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# slow modulation demo amplitude={args.amplitude:g} "
                 f"frequency={args.frequency:g} "
                 f"cpf_random_late={res.max_abs():.3e}\n")
        fh.write("t,d_full,d_adiabatic,revival\n")
        for i, t in enumerate(grid.times):
            fh.write(f"{t:.12g},{trace.values[i]:.12g},{d_ad[i]:.12g},"
                     f"{int(trace.revivals[i])}\n")
    n_rev = int(trace.revivals.sum())
    print(f"wrote {args.out}; {n_rev} revival steps flagged; "
          f"late random-scheme correlation {res.max_abs():.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
