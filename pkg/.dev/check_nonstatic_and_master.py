"""Dev check: general (nonstatic) two-time path + full master-equation loop."""
import numpy as np

from fanodyn.grids import TimeGrid
from fanodyn.kernels import KernelSamples, PhaseTable
from fanodyn.greens import (build_two_time_field, build_correlations,
                            attach_log_derivatives)
from fanodyn.master import FockSpace, assemble_coefficients, evolve, moments
from fanodyn.model import (ConstantSchedule, QuenchSchedule, TabulatedSchedule,
                           Mode, ModelSpec, Reservoir, Statistics,
                           PartitionFreeThermal, DecoupledThermal,
                           initial_correlations, uniform_band)
from fanodyn import oracle

# --- nonstatic: mid-run quench of the level + tabulated drive on a mode -----
grid = TimeGrid(0.0, 4.0, 400)
eps_q = QuenchSchedule(initial=np.array([[0.2]]), times=(2.0,),
                       values=(np.array([[-0.4]]),))
tab_times = np.linspace(0.0, 4.0, 81)
tab_vals = 0.8 + 0.3 * np.sin(1.7 * tab_times)
modes = (
    Mode(eps=TabulatedSchedule(tab_times, tab_vals),
         coupling=ConstantSchedule(np.array([0.3 + 0j]))),
    Mode(eps=ConstantSchedule(-0.6),
         coupling=ConstantSchedule(np.array([0.2 + 0.1j]))),
)
spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1, eps_sys=eps_q,
                 reservoirs=(Reservoir(modes=modes),))
init = initial_correlations(spec, PartitionFreeThermal(beta=1.0), grid.t0)
phases = PhaseTable.build(spec, grid)
print("static:", phases.static)
kern = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
field = build_two_time_field(spec, kern, grid)
prop = oracle.total_propagator(spec, grid)
print(f"nonstatic u vs oracle: {np.abs(field.col0[:, 0, 0] - prop.u[:, 0, 0]).max():.3e}")
corr = build_correlations(field, kern, grid)
worst = 0.0
for a in range(0, grid.n_nodes, 50):
    for b in range(0, grid.n_nodes, 50):
        v_exact = (prop.u[a] @ init.c0 @ prop.u[b].conj().T)[:1, :1] \
            - field.col0[a] @ init.c_sys @ field.col0[b].conj().T
        worst = max(worst, np.abs(corr.v(a, b) - v_exact).max())
print(f"nonstatic v vs oracle: {worst:.3e}")

# static-vs-general consistency on a static model
grid_s = TimeGrid(0.0, 2.0, 80)
spec_s = ModelSpec(
    statistics=Statistics.FERMION, n_levels=2,
    eps_sys=ConstantSchedule(np.array([[0.2, 0.1 - 0.05j], [0.1 + 0.05j, -0.3]])),
    reservoirs=(uniform_band(3, -1.0, 1.0, 0.4, n_levels=2, level=0),),
)
init_s = initial_correlations(spec_s, PartitionFreeThermal(beta=2.0), grid_s.t0)
ph_s = PhaseTable.build(spec_s, grid_s)
k_s = KernelSamples(phases=ph_s, init=init_s, statistics=spec_s.statistics)
f_static = build_two_time_field(spec_s, k_s, grid_s)
# force the general path
k_s2 = KernelSamples(phases=PhaseTable(grid=grid_s, phi=ph_s.phi,
                                       dressed=ph_s.dressed, static=False),
                     init=init_s, statistics=spec_s.statistics)
from fanodyn.greens import TwoTimeField, _march_column
eps_nodes = np.stack([spec_s.eps_sys_at(t) for t in grid_s.nodes])
cols = [_march_column(eps_nodes, k_s2.g_row, grid_s, m) for m in range(grid_s.n_nodes)]
f_general = TwoTimeField(grid=grid_s, n_levels=2, static=False,
                         col0=cols[0], columns=cols)
worst = max(np.abs(f_static.u(n, m) - f_general.u(n, m)).max()
            for n in range(grid_s.n_nodes) for m in range(0, n + 1, 7))
print(f"static shift vs general columns: {worst:.3e}")

# --- closed loop: fermion N=1 K=6 partition-free quench ----------------------
grid = TimeGrid(0.0, 10.0, 2000)
eps_q = QuenchSchedule(initial=np.array([[0.3]]), times=(0.0,),
                       values=(np.array([[-0.3]]),))
spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1, eps_sys=eps_q,
                 reservoirs=(uniform_band(6, -2.0, 2.0, 0.3),))
init = initial_correlations(spec, PartitionFreeThermal(beta=1.0), grid.t0)
phases = PhaseTable.build(spec, grid)
kern = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
import time
t0 = time.time()
field = build_two_time_field(spec, kern, grid)
t1 = time.time()
logd = attach_log_derivatives(spec, kern, grid, field)
t2 = time.time()
corr = build_correlations(field, kern, grid)
t3 = time.time()
traj = assemble_coefficients(logd, corr.v_diag, corr.nu_diag,
                             corr.vdot_diag, corr.nudot_diag, spec.statistics)
fock = FockSpace(Statistics.FERMION, 1)
n0 = float(np.real(init.c_sys[0, 0]))
rho0 = np.diag([1.0 - n0, n0]).astype(complex)
res = evolve(rho0, traj, grid, fock)
t4 = time.time()
prop = oracle.total_propagator(spec, grid)
c_sys, _ = oracle.system_moment_trajectory(prop, init)
tdist = np.array([oracle.trace_distance(
    res.rhos[k], np.diag([1.0 - c_sys[k, 0, 0].real, c_sys[k, 0, 0].real]))
    for k in range(grid.n_nodes)])
print(f"closed-loop trace distance max: {tdist.max():.3e}")
print(f"trace drift max: {res.trace_drift.max():.3e}  herm defect: {res.herm_defect.max():.3e}")
print(f"min eig: {res.min_eig.min():.3e}")
print(f"timing: field {t1-t0:.2f}s logderiv {t2-t1:.2f}s corr {t3-t2:.2f}s evolve {t4-t3:.2f}s")

# --- closed loop: boson decoupled thermal ------------------------------------
grid_b = TimeGrid(0.0, 10.0, 2000)
spec_b = ModelSpec(statistics=Statistics.BOSON, n_levels=1,
                   eps_sys=ConstantSchedule(np.array([[1.5]])),
                   reservoirs=(uniform_band(6, 1.0, 2.2, 0.3),))
init_b = initial_correlations(
    spec_b, DecoupledThermal(reservoir_temps=((1.5, 0.0),),
                             system_c=np.array([[0.3]])), grid_b.t0)
ph_b = PhaseTable.build(spec_b, grid_b)
k_b = KernelSamples(phases=ph_b, init=init_b, statistics=spec_b.statistics)
f_b = build_two_time_field(spec_b, k_b, grid_b)
ld_b = attach_log_derivatives(spec_b, k_b, grid_b, f_b)
corr_b = build_correlations(f_b, k_b, grid_b)
traj_b = assemble_coefficients(ld_b, corr_b.v_diag, corr_b.nu_diag,
                               corr_b.vdot_diag, corr_b.nudot_diag, spec_b.statistics)
prop_b = oracle.total_propagator(spec_b, grid_b)
c_b, _ = oracle.system_moment_trajectory(prop_b, init_b)
nbar_max = c_b[:, 0, 0].real.max()
n_max = 1
while (nbar_max / (1 + nbar_max)) ** n_max >= 1e-8:
    n_max += 1
print(f"boson nbar max {nbar_max:.3f} -> n_max {n_max}")
fock_b = FockSpace(Statistics.BOSON, 1, n_max)
rho0_b = oracle.gaussian_fock_state(init_b.c_sys, None, fock_b)
res_b = evolve(rho0_b, traj_b, grid_b, fock_b)
tdist_b = np.array([oracle.trace_distance(
    res_b.rhos[k], oracle.gaussian_fock_state(c_b[k], None, fock_b))
    for k in range(0, grid_b.n_nodes, 10)])
print(f"boson closed-loop trace distance max: {tdist_b.max():.3e}")
print(f"boson cutoff leak max: {res_b.cutoff_leak.max():.3e}  failures: {res_b.failures}")
