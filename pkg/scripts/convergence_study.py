#!/usr/bin/env python3
"""Step-halving convergence table for the Volterra propagator.

Solves the Dyson equation on the Rabi configuration (closed form cos(Vt))
and on a wide-band configuration (reference: exact oracle propagator) for a
sequence of step sizes and prints max-norm errors with their ratios; ~4
per halving confirms second order.
"""
import argparse

import numpy as np

from fanodyn import (ConstantSchedule, KernelSamples, Mode, ModelSpec,
                     PartitionFreeThermal, PhaseTable, Reservoir, Statistics,
                     TimeGrid, build_two_time_field, initial_correlations,
                     total_propagator, uniform_band)


def rabi_error(steps, v=0.5, t_final=10.0):
    grid = TimeGrid(0.0, t_final, steps)
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=1,
        eps_sys=ConstantSchedule(np.zeros((1, 1))),
        reservoirs=(Reservoir(modes=(Mode(eps=ConstantSchedule(0.0),
                                          coupling=ConstantSchedule(np.array([v + 0j]))),)),),
    )
    init = initial_correlations(spec, PartitionFreeThermal(beta=1.0), 0.0)
    kern = KernelSamples(phases=PhaseTable.build(spec, grid), init=init,
                         statistics=spec.statistics)
    field = build_two_time_field(spec, kern, grid)
    return float(np.abs(field.col0[:, 0, 0] - np.cos(v * grid.nodes)).max())


def band_error(steps, rate=0.5, t_final=10.0, modes=40):
    grid = TimeGrid(0.0, t_final, steps)
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1,
                     eps_sys=ConstantSchedule(np.array([[0.2]])),
                     reservoirs=(uniform_band(modes, -4.0, 4.0, rate),))
    init = initial_correlations(spec, PartitionFreeThermal(beta=1.0), 0.0)
    kern = KernelSamples(phases=PhaseTable.build(spec, grid), init=init,
                         statistics=spec.statistics)
    field = build_two_time_field(spec, kern, grid)
    prop = total_propagator(spec, grid)
    return float(np.abs(field.col0[:, 0, 0] - prop.u[:, 0, 0]).max())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-steps", type=int, default=500)
    ap.add_argument("--halvings", type=int, default=3)
    args = ap.parse_args()

    for name, fn in (("rabi", rabi_error), ("band", band_error)):
        print(f"\n{name} configuration")
        print(f"{'steps':>8s} {'max err':>12s} {'ratio':>7s}")
        prev = None
        steps = args.base_steps
        for _ in range(args.halvings + 1):
            err = fn(steps)
            ratio = f"{prev / err:7.2f}" if prev else "      -"
            print(f"{steps:8d} {err:12.3e} {ratio}")
            prev = err
            steps *= 2


if __name__ == "__main__":
    main()
