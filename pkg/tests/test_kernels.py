import numpy as np
import pytest
from scipy.integrate import quad

from fanodyn import (ConstantSchedule, CustomGaussian, DecoupledThermal,
                     KernelSamples, Mode, ModelSpec, PartitionFreeThermal,
                     PhaseTable, QuenchSchedule, Reservoir, Statistics,
                     TabulatedSchedule, TimeGrid, build_two_time_field,
                     initial_correlations, memory_kernel, pair_kernel_bb,
                     particle_kernel_bb, sb_boundary_nu, sb_boundary_v,
                     thermal_bb_kernel, thermal_occupation, total_propagator,
                     uniform_band)
from conftest import single_mode_spec


def make_kernels(spec, init_spec, grid):
    init = initial_correlations(spec, init_spec, grid.t0)
    phases = PhaseTable.build(spec, grid)
    return init, phases, KernelSamples(phases=phases, init=init,
                                       statistics=spec.statistics)


def test_memory_kernel_zero_coupling():
    spec = single_mode_spec(v=0.0)
    grid = TimeGrid(0.0, 2.0, 10)
    phases = PhaseTable.build(spec, grid)
    assert np.abs(memory_kernel(phases, 7, 3)).max() == 0.0


def test_memory_kernel_single_mode_closed_form():
    # constant V, eps_b: g(t, tau) = |V|^2 exp(-i eps_b (t - tau))
    spec = single_mode_spec(v=0.3, eps_b=1.0)
    grid = TimeGrid(0.0, 4.0, 400)
    phases = PhaseTable.build(spec, grid)
    g = memory_kernel(phases, 300, 100)   # t - tau = 2
    assert abs(g[0, 0] - 0.09 * np.exp(-2j)) < 1e-12


def test_memory_kernel_rejects_reversed_times():
    spec = single_mode_spec(v=0.3)
    phases = PhaseTable.build(spec, TimeGrid(0.0, 1.0, 10))
    with pytest.raises(ValueError):
        memory_kernel(phases, 2, 5)


def test_memory_kernel_time_dependent_phase_quadrature_oracle():
    # eps_b(t) = sin t tabulated finely; reference phase from adaptive quadrature
    grid = TimeGrid(0.0, 3.0, 300)
    ts = np.linspace(0.0, 3.0, 1201)
    mode = Mode(eps=TabulatedSchedule(ts, np.sin(ts)),
                coupling=ConstantSchedule(np.array([0.4 + 0j])))
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1,
                     eps_sys=ConstantSchedule(np.zeros((1, 1))),
                     reservoirs=(Reservoir(modes=(mode,)),))
    phases = PhaseTable.build(spec, grid)
    n_t, n_tau = 250, 80
    g = memory_kernel(phases, n_t, n_tau)

    def eps_interp(t):
        return np.interp(t, ts, np.sin(ts))

    phase, _ = quad(eps_interp, grid.node(n_tau), grid.node(n_t), limit=400)
    expected = 0.16 * np.exp(-1j * phase)
    # trapezoid phase error is O(h^2); budget a small multiple of h^2
    assert abs(g[0, 0] - expected) < 5.0 * grid.h ** 2


def test_particle_kernel_zero_bath_block():
    spec = single_mode_spec(v=0.3, eps_b=1.0)
    grid = TimeGrid(0.0, 2.0, 20)
    init, phases, kern = make_kernels(
        spec, DecoupledThermal(reservoir_temps=((np.inf, 0.0),),
                               system_c=np.array([[0.0]])), grid)
    assert np.abs(kern.particle_kernel_bb(15, 3)).max() == 0.0


def test_particle_kernel_single_mode_occupation():
    nbar = 0.37
    spec = single_mode_spec(v=0.3, eps_b=1.2)
    grid = TimeGrid(0.0, 3.0, 300)
    c0 = np.diag([0.0, nbar]).astype(complex)
    init, phases, kern = make_kernels(
        spec, CustomGaussian(c0=c0, p0=np.zeros((2, 2))), grid)
    a, b = 240, 60
    dt = grid.node(a) - grid.node(b)
    expected = 0.09 * nbar * np.exp(-1.2j * dt)
    assert abs(kern.particle_kernel_bb(a, b)[0, 0] - expected) < 1e-12


def test_particle_kernel_decoupled_matches_thermal_closed_form(rng):
    # two reservoirs at different temperatures; the generic bath-bath kernel
    # must coincide with the closed-form thermal kernel everywhere
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[0.1]])),
        reservoirs=(uniform_band(3, -1.5, 1.0, 0.3),
                    uniform_band(4, 0.2, 2.0, 0.2)),
    )
    grid = TimeGrid(0.0, 2.0, 100)
    temps = ((0.7, 0.1), (2.5, -0.3))
    init, phases, kern = make_kernels(
        spec, DecoupledThermal(reservoir_temps=temps,
                               system_c=np.array([[0.5]])), grid)
    for _ in range(20):
        a, b = rng.integers(0, grid.n_nodes, size=2)
        direct = thermal_bb_kernel(spec, phases, temps, a, b)
        assert np.abs(kern.particle_kernel_bb(a, b) - direct).max() < 1e-12

    # same statement for bosons with the Bose distribution
    spec_b = ModelSpec(
        statistics=Statistics.BOSON, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[1.0]])),
        reservoirs=(uniform_band(3, 0.5, 2.0, 0.3),),
    )
    init_b, phases_b, kern_b = make_kernels(
        spec_b, DecoupledThermal(reservoir_temps=((1.3, 0.0),),
                                 system_c=np.array([[0.2]])), grid)
    for _ in range(10):
        a, b = rng.integers(0, grid.n_nodes, size=2)
        direct = thermal_bb_kernel(spec_b, phases_b, ((1.3, 0.0),), a, b)
        assert np.abs(kern_b.particle_kernel_bb(a, b) - direct).max() < 1e-12


def test_pair_kernel_zero_without_pairs():
    spec = single_mode_spec(v=0.3)
    grid = TimeGrid(0.0, 1.0, 10)
    init, phases, kern = make_kernels(spec, PartitionFreeThermal(beta=1.0), grid)
    assert np.abs(kern.pair_kernel_bb(5, 7)).max() == 0.0


def test_pair_kernel_single_mode_closed_form():
    s_amp = 0.23 - 0.11j
    spec = single_mode_spec(v=0.3, eps_b=0.8, statistics=Statistics.BOSON)
    grid = TimeGrid(0.0, 3.0, 300)
    c0 = np.diag([0.1, 0.4]).astype(complex)
    p0 = np.array([[0.0, 0.0], [0.0, s_amp]])   # <b b> = s_amp
    init, phases, kern = make_kernels(spec, CustomGaussian(c0=c0, p0=p0), grid)
    a, b = 120, 250
    t1, t2 = grid.node(a), grid.node(b)
    expected = -0.09 * s_amp * np.exp(-0.8j * (t1 + t2))
    assert abs(kern.pair_kernel_bb(a, b)[0, 0] - expected) < 1e-12


def test_pair_kernel_brute_force_double_sum(rng):
    # random valid symmetric bath pair block vs direct mode-sum loops
    n_modes = 4
    spec = ModelSpec(
        statistics=Statistics.BOSON, n_levels=2,
        eps_sys=ConstantSchedule(np.diag([1.0, 1.5]).astype(complex)),
        reservoirs=(uniform_band(n_modes, 0.5, 2.5, 0.4, n_levels=2),),
    )
    grid = TimeGrid(0.0, 2.0, 120)
    d = 2 + n_modes
    p0 = np.zeros((d, d), dtype=complex)
    raw = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
    p0[2:, 2:] = 0.05 * (raw + raw.T)
    c0 = np.zeros((d, d), dtype=complex)
    c0[2:, 2:] = np.diag(rng.uniform(0.1, 0.8, size=n_modes))
    init, phases, kern = make_kernels(spec, CustomGaussian(c0=c0, p0=p0), grid)

    a, b = 37, 90
    direct = np.zeros((2, 2), dtype=complex)
    for m, mode_m in enumerate(spec.flat_modes):
        for mp, mode_mp in enumerate(spec.flat_modes):
            pair = p0[2 + m, 2 + mp]          # <b_mp b_m>
            if pair == 0.0:
                continue
            v_m = mode_m.coupling.value_at(grid.node(a))
            v_mp = mode_mp.coupling.value_at(grid.node(b))
            ph = np.exp(-1j * (phases.phi[a, m] + phases.phi[b, mp]))
            direct -= np.outer(v_m, v_mp) * ph * pair
    assert np.abs(kern.pair_kernel_bb(a, b) - direct).max() < 1e-13


def test_particle_kernel_hermitian_symmetry(rng):
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=2,
        eps_sys=ConstantSchedule(np.diag([0.2, -0.1]).astype(complex)),
        reservoirs=(uniform_band(5, -1.0, 1.0, 0.3, n_levels=2),),
    )
    grid = TimeGrid(0.0, 2.0, 60)
    init, phases, kern = make_kernels(spec, PartitionFreeThermal(beta=1.0), grid)
    for _ in range(15):
        a, b = rng.integers(0, grid.n_nodes, size=2)
        g_ab = kern.particle_kernel_bb(a, b)
        g_ba = kern.particle_kernel_bb(b, a)
        assert np.abs(g_ab.conj().T - g_ba).max() < 1e-12


def test_memory_kernel_coincidence_psd():
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=2,
        eps_sys=ConstantSchedule(np.zeros((2, 2))),
        reservoirs=(uniform_band(6, -2.0, 2.0, 0.5, n_levels=2, level=1),),
    )
    grid = TimeGrid(0.0, 1.0, 50)
    phases = PhaseTable.build(spec, grid)
    n = 30
    g_tt = memory_kernel(phases, n, n)
    v = spec.coupling_matrix(grid.node(n))
    assert np.abs(g_tt - v @ v.conj().T).max() < 1e-13
    assert np.linalg.eigvalsh(0.5 * (g_tt + g_tt.conj().T)).min() > -1e-13


def test_all_kernels_vanish_without_coupling():
    spec = single_mode_spec(v=0.0, eps_b=1.0)
    grid = TimeGrid(0.0, 1.0, 20)
    c0 = np.diag([0.4, 0.6]).astype(complex)
    init, phases, kern = make_kernels(
        spec, CustomGaussian(c0=c0, p0=np.zeros((2, 2))), grid)
    assert np.abs(kern.g_row(15)).max() == 0.0
    assert np.abs(kern.particle_kernel_bb(3, 9)).max() == 0.0
    assert np.abs(kern.pair_kernel_bb(3, 9)).max() == 0.0


# --- collapsed system-bath boundary terms ------------------------------------


def test_sb_boundary_zero_for_decoupled():
    spec = single_mode_spec(v=0.4)
    grid = TimeGrid(0.0, 2.0, 50)
    init, phases, kern = make_kernels(
        spec, DecoupledThermal(reservoir_temps=((1.0, 0.0),),
                               system_c=np.array([[0.5]])), grid)
    field = build_two_time_field(spec, kern, grid)
    assert np.abs(sb_boundary_v(kern, field, 20, 40)).max() == 0.0
    assert np.abs(sb_boundary_nu(kern, field, 20, 40)).max() == 0.0


def test_sb_boundary_zero_when_coupling_quenched_off():
    # correlated initial state, but V drops to zero at t0: the boundary
    # kernel carries V(tau1) factors and must vanish
    coup = QuenchSchedule(initial=np.array([0.5 + 0j]), times=(0.0,),
                          values=(np.array([0.0 + 0j]),))
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[0.2]])),
        reservoirs=(Reservoir(modes=(Mode(eps=ConstantSchedule(0.7),
                                          coupling=coup),)),),
    )
    grid = TimeGrid(0.0, 2.0, 50)
    init, phases, kern = make_kernels(spec, PartitionFreeThermal(beta=1.0), grid)
    assert np.abs(init.c_bath_sys).max() > 1e-3   # correlations are there
    field = build_two_time_field(spec, kern, grid)
    assert np.abs(sb_boundary_v(kern, field, 10, 30)).max() == 0.0


def test_sb_boundary_v_oracle_subtraction():
    # v_exact from total-propagator moments, minus the bath-bath double
    # integral, isolates the boundary contribution
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=1,
        eps_sys=QuenchSchedule(initial=np.array([[0.5]]), times=(0.0,),
                               values=(np.array([[-0.2]]),)),
        reservoirs=(uniform_band(2, -0.8, 0.8, 0.25),),
    )
    grid = TimeGrid(0.0, 4.0, 800)
    init, phases, kern = make_kernels(spec, PartitionFreeThermal(beta=1.5), grid)
    field = build_two_time_field(spec, kern, grid)
    prop = total_propagator(spec, grid)

    for a, b in [(300, 700), (700, 300), (550, 550), (0, 400)]:
        v_exact = (prop.u[a] @ init.c0 @ prop.u[b].conj().T)[:1, :1] \
            - field.col0[a] @ init.c_sys @ field.col0[b].conj().T
        w_a = grid.trapezoid_weights(a)
        w_b = grid.trapezoid_weights(b)
        bb = np.zeros((1, 1), dtype=complex)
        row_a, row_b = field.row(a), field.row(b)
        for k in range(a + 1):
            gt = kern.gtil_bb_row(k)
            inner = np.einsum("l,lij->ij", w_b[: b + 1],
                              np.matmul(gt[: b + 1], row_b.conj().transpose(0, 2, 1)))
            bb += w_a[k] * (row_a[k] @ inner)
        boundary = sb_boundary_v(kern, field, a, b)
        assert np.abs(boundary - (v_exact - bb)).max() < 2e-4


def test_sb_boundary_nu_statistics_sign():
    # swapping statistics flips the symmetrized term; check structurally
    grid = TimeGrid(0.0, 1.0, 40)
    specs = {}
    for stats in (Statistics.FERMION, Statistics.BOSON):
        spec = single_mode_spec(v=0.4, eps=0.6, eps_b=1.1, statistics=stats)
        c0 = np.diag([0.3, 0.3]).astype(complex)
        p = 0.12 - 0.07j
        sgn = stats.sign
        p0 = np.array([[0.0, sgn * p], [p, 0.0]])
        init, phases, kern = make_kernels(spec, CustomGaussian(c0=c0, p0=p0), grid)
        field = build_two_time_field(spec, kern, grid)
        amat = kern.boundary_matrix_nu()
        w = grid.trapezoid_weights(25)
        r25 = np.einsum("k,kij,kjl->il", w, field.row(25), amat[:26])
        w = grid.trapezoid_weights(10)
        r10 = np.einsum("k,kij,kjl->il", w, field.row(10), amat[:11])
        term1 = 0.5 * (r10 @ field.col0[25].T)
        term2 = 0.5 * (field.col0[10] @ r25.T)
        total = sb_boundary_nu(kern, field, 10, 25)
        assert np.abs(total - (term1 + sgn * term2)).max() < 1e-14


def test_sb_boundary_nu_squeezed_oracle_subtraction():
    # squeezed-type correlated state: <a b> nonzero
    spec = single_mode_spec(v=0.3, eps=1.0, eps_b=1.4, statistics=Statistics.BOSON)
    grid = TimeGrid(0.0, 4.0, 800)
    r = 0.5
    c0 = (np.sinh(r) ** 2 * np.eye(2)).astype(complex)
    s12 = np.cosh(r) * np.sinh(r)
    p0 = np.array([[0.0, s12], [s12, 0.0]]).astype(complex)
    init, phases, kern = make_kernels(spec, CustomGaussian(c0=c0, p0=p0), grid)
    field = build_two_time_field(spec, kern, grid)
    prop = total_propagator(spec, grid)

    for a, b in [(200, 600), (600, 200), (777, 777)]:
        nu_exact = (prop.u[a] @ init.p0 @ prop.u[b].T)[:1, :1] \
            - field.col0[a] @ init.p_sys @ field.col0[b].T
        w_a = grid.trapezoid_weights(a)
        w_b = grid.trapezoid_weights(b)
        bb = np.zeros((1, 1), dtype=complex)
        row_a, row_b = field.row(a), field.row(b)
        for k in range(a + 1):
            gb = kern.gbar_bb_row(k)
            inner = np.einsum("l,lij->ij", w_b[: b + 1],
                              np.matmul(gb[: b + 1], row_b.transpose(0, 2, 1)))
            bb += w_a[k] * (row_a[k] @ inner)
        boundary = sb_boundary_nu(kern, field, a, b)
        assert np.abs(boundary - (nu_exact - bb)).max() < 2e-4


def test_phase_table_invariants():
    spec = single_mode_spec(v=0.2, eps_b=1.5)
    grid = TimeGrid(0.0, 2.0, 100)
    phases = PhaseTable.build(spec, grid)
    assert phases.phi[0, 0] == 0.0
    assert np.all(np.diff(phases.phi[:, 0]) > 0)      # eps_b > 0 -> monotone
    assert np.allclose(phases.phi[:, 0], 1.5 * grid.nodes, atol=1e-12)
