#!/usr/bin/env python3
"""Steady-state fluctuation-dissipation check in the weak-coupling regime.

Evolves a single fermion level coupled to a wide uniform band through the
full master-equation pipeline and compares the late-time occupation with
the Fermi function at the level energy.  Keep rate/temperature small and
stop before the bath recurrence time.
"""
import argparse

import numpy as np

from fanodyn import (ConstantSchedule, DecoupledThermal, FockSpace, ModelSpec,
                     Statistics, TimeGrid, build_greens_stack, run_master,
                     thermal_occupation, uniform_band)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rate", type=float, default=0.2)
    ap.add_argument("--temperature", type=float, default=4.0)
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--n0", type=float, default=0.3, help="initial level occupation")
    ap.add_argument("--modes", type=int, default=40)
    ap.add_argument("--band", type=float, default=6.0, help="band half-width")
    ap.add_argument("--t-final", type=float, default=18.0)
    ap.add_argument("--steps", type=int, default=1800)
    args = ap.parse_args()

    beta = 1.0 / args.temperature
    grid = TimeGrid(0.0, args.t_final, args.steps)
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1,
                     eps_sys=ConstantSchedule(np.array([[args.eps]])),
                     reservoirs=(uniform_band(args.modes, -args.band, args.band,
                                              args.rate),))
    stack = build_greens_stack(
        spec, DecoupledThermal(reservoir_temps=((beta, 0.0),),
                               system_c=np.array([[args.n0]])), grid)
    run = run_master(stack, FockSpace(Statistics.FERMION, 1))
    occ = run.occupations()[:, 0]
    tail = occ[int(0.85 * len(occ)):]
    target = thermal_occupation([args.eps], beta, 0.0, Statistics.FERMION)[0]
    d_eps = 2.0 * args.band / (args.modes - 1)
    print(f"rate/T                = {args.rate / args.temperature:.3f}")
    print(f"bath recurrence time  = {2 * np.pi / d_eps:.1f}")
    print(f"late-time occupation  = {tail.mean():.5f}")
    print(f"Fermi target f(eps)   = {target:.5f}")
    print(f"relative deviation    = {abs(tail.mean() - target) / target:.3%}")


if __name__ == "__main__":
    main()
