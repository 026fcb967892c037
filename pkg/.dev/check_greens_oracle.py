"""Dev check: Dyson u and the correlation functions against the oracle.

1. Rabi closed form u = cos(Vt).
2. Partition-free fermion N=1, K=2 with a level quench at t0:
   - u(t,0) vs oracle system block
   - v(a,b) vs [U C0 U^dag]_SS - u C0_SS u^dag on a grid of pairs
3. Custom Gaussian with pair correlations: nu(a,b) vs [U P0 U^T]_SS - u P0_SS u^T.
"""
import numpy as np

from fanodyn.grids import TimeGrid
from fanodyn.kernels import KernelSamples, PhaseTable
from fanodyn.greens import build_two_time_field, build_correlations
from fanodyn.model import (ConstantSchedule, QuenchSchedule, Mode, ModelSpec,
                           Reservoir, Statistics, PartitionFreeThermal,
                           CustomGaussian, initial_correlations)
from fanodyn import oracle

# --- 1. Rabi ---------------------------------------------------------------
grid = TimeGrid(0.0, 10.0, 1000)
v = 0.5
spec = ModelSpec(
    statistics=Statistics.FERMION, n_levels=1,
    eps_sys=ConstantSchedule(np.zeros((1, 1))),
    reservoirs=(Reservoir(modes=(Mode(eps=ConstantSchedule(0.0),
                                      coupling=ConstantSchedule(np.array([v + 0j]))),)),),
)
init = initial_correlations(spec, PartitionFreeThermal(beta=1.0), grid.t0)
phases = PhaseTable.build(spec, grid)
kern = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
field = build_two_time_field(spec, kern, grid)
exact = np.cos(v * grid.nodes)
err = np.abs(field.col0[:, 0, 0] - exact).max()
print(f"Rabi u error (h={grid.h}): {err:.3e}")

grid2 = grid.halved()
phases2 = PhaseTable.build(spec, grid2)
kern2 = KernelSamples(phases=phases2, init=init, statistics=spec.statistics)
field2 = build_two_time_field(spec, kern2, grid2)
err2 = np.abs(field2.col0[:, 0, 0] - np.cos(v * grid2.nodes)).max()
print(f"Rabi u error (h/2): {err2:.3e}  ratio {err / err2:.2f}")

# --- 2. partition-free fermion, K=2, quench at t0 ---------------------------
grid = TimeGrid(0.0, 6.0, 600)
eps_q = QuenchSchedule(initial=np.array([[0.4]]), times=(0.0,),
                       values=(np.array([[-0.3]]),))
modes = (
    Mode(eps=ConstantSchedule(0.8), coupling=ConstantSchedule(np.array([0.35 + 0j]))),
    Mode(eps=ConstantSchedule(-0.5), coupling=ConstantSchedule(np.array([0.25 - 0.1j]))),
)
spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1, eps_sys=eps_q,
                 reservoirs=(Reservoir(modes=modes),))
init = initial_correlations(spec, PartitionFreeThermal(beta=1.5, mu=0.1), grid.t0)
print("C0 =", np.round(init.c0, 4))
phases = PhaseTable.build(spec, grid)
print("static:", phases.static)
kern = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
field = build_two_time_field(spec, kern, grid)
prop = oracle.total_propagator(spec, grid)
u_err = np.abs(field.col0[:, 0, 0] - prop.u[:, 0, 0]).max()
print(f"K=2 u vs oracle: {u_err:.3e}")

corr = build_correlations(field, kern, grid)
c_sys, p_sys = oracle.system_moment_trajectory(prop, init)
worst = 0.0
for a in range(0, grid.n_nodes, 60):
    for b in range(0, grid.n_nodes, 60):
        ua = prop.u[a]
        v_exact = (ua @ init.c0 @ prop.u[b].conj().T)[:1, :1] \
            - field.col0[a] @ init.c_sys @ field.col0[b].conj().T
        worst = max(worst, np.abs(corr.v(a, b) - v_exact).max())
print(f"K=2 v(a,b) vs oracle identity: {worst:.3e}")

# equal-time occupation
occ_me = np.real(init.c_sys[0, 0] * np.abs(field.col0[:, 0, 0]) ** 2
                 + corr.v_diag[:, 0, 0])
occ_or = np.real(c_sys[:, 0, 0])
print(f"occupation err: {np.abs(occ_me - occ_or).max():.3e}")

# --- 3. pair correlations (custom Gaussian, fermion N=1, K=1) ---------------
grid = TimeGrid(0.0, 4.0, 400)
spec = ModelSpec(
    statistics=Statistics.FERMION, n_levels=1,
    eps_sys=ConstantSchedule(np.array([[0.3]])),
    reservoirs=(Reservoir(modes=(Mode(eps=ConstantSchedule(0.9),
                                      coupling=ConstantSchedule(np.array([0.3 + 0j]))),)),),
)
p = 0.21 - 0.08j
c0 = np.diag([0.5, 0.5]).astype(complex)
p0 = np.array([[0.0, -p], [p, 0.0]])   # P0[m,n] = <c_n c_m>; <a b> = P0[1,0]
init = initial_correlations(spec, CustomGaussian(c0=c0, p0=p0), grid.t0)
phases = PhaseTable.build(spec, grid)
kern = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
field = build_two_time_field(spec, kern, grid)
corr = build_correlations(field, kern, grid)
prop = oracle.total_propagator(spec, grid)
worst = 0.0
for a in range(0, grid.n_nodes, 40):
    for b in range(0, grid.n_nodes, 40):
        nu_exact = (prop.u[a] @ init.p0 @ prop.u[b].T)[:1, :1] \
            - field.col0[a] @ init.p_sys @ field.col0[b].T
        worst = max(worst, np.abs(corr.nu(a, b) - nu_exact).max())
print(f"pair nu(a,b) vs oracle identity (fermion): {worst:.3e}")

# boson squeezed-type
spec_b = ModelSpec(
    statistics=Statistics.BOSON, n_levels=1,
    eps_sys=ConstantSchedule(np.array([[1.2]])),
    reservoirs=(Reservoir(modes=(Mode(eps=ConstantSchedule(1.5),
                                      coupling=ConstantSchedule(np.array([0.2 + 0j]))),)),),
)
r = 0.6
c0 = np.diag([np.sinh(r) ** 2, np.sinh(r) ** 2]).astype(complex)
s12 = np.cosh(r) * np.sinh(r)
p0 = np.array([[0.0, s12], [s12, 0.0]]).astype(complex)
init_b = initial_correlations(spec_b, CustomGaussian(c0=c0, p0=p0), grid.t0)
phases_b = PhaseTable.build(spec_b, grid)
kern_b = KernelSamples(phases=phases_b, init=init_b, statistics=spec_b.statistics)
field_b = build_two_time_field(spec_b, kern_b, grid)
corr_b = build_correlations(field_b, kern_b, grid)
prop_b = oracle.total_propagator(spec_b, grid)
worst = 0.0
for a in range(0, grid.n_nodes, 40):
    for b in range(0, grid.n_nodes, 40):
        nu_exact = (prop_b.u[a] @ init_b.p0 @ prop_b.u[b].T)[:1, :1] \
            - field_b.col0[a] @ init_b.p_sys @ field_b.col0[b].T
        worst = max(worst, np.abs(corr_b.nu(a, b) - nu_exact).max())
print(f"pair nu(a,b) vs oracle identity (boson):   {worst:.3e}")
