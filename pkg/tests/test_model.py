import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fanodyn import (ConfigurationError, ConstantSchedule, CustomGaussian,
                     DecoupledThermal, DomainError, Mode, ModelSpec,
                     PartitionFreeThermal, QuenchSchedule, Reservoir,
                     Statistics, TabulatedSchedule, TimeGrid, ValidationError,
                     build_single_particle_hamiltonian, initial_correlations,
                     thermal_occupation, uniform_band, validate_model)
from conftest import single_mode_spec


def test_hamiltonian_no_bath():
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1,
                     eps_sys=ConstantSchedule(np.array([[0.5]])))
    h = build_single_particle_hamiltonian(spec, 0.0)
    assert h.shape == (1, 1)
    assert h[0, 0] == 0.5


def test_hamiltonian_single_mode():
    spec = single_mode_spec(v=0.2, eps=0.0, eps_b=0.0)
    h = build_single_particle_hamiltonian(spec, 1.0)
    assert np.allclose(h, [[0.0, 0.2], [0.2, 0.0]])


def test_hamiltonian_random_schedules_independent_assembly(rng):
    # reassemble element by element straight from the schedules
    n, t = 2, 1.3
    eps = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    eps = 0.5 * (eps + eps.conj().T)
    modes = []
    for _ in range(3):
        e_t = TabulatedSchedule(np.linspace(0.0, 2.0, 9),
                                rng.normal(size=9))
        v_t = ConstantSchedule(rng.normal(size=n) + 1j * rng.normal(size=n))
        modes.append(Mode(eps=e_t, coupling=v_t))
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=n,
                     eps_sys=ConstantSchedule(eps),
                     reservoirs=(Reservoir(modes=tuple(modes)),))
    h = build_single_particle_hamiltonian(spec, t)

    d = n + 3
    expected = np.zeros((d, d), dtype=complex)
    expected[:n, :n] = eps
    for m, mode in enumerate(modes):
        expected[n + m, n + m] = mode.eps.value_at(t)
        for i in range(n):
            expected[i, n + m] = mode.coupling.value_at(t)[i]
            expected[n + m, i] = np.conj(mode.coupling.value_at(t)[i])
    assert np.abs(h - expected).max() < 1e-14
    assert np.abs(h - h.conj().T).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(e00=st.floats(-3, 3), e11=st.floats(-3, 3),
       re=st.floats(-2, 2), im=st.floats(-2, 2), v=st.floats(-2, 2))
def test_hamiltonian_hermitian_property(e00, e11, re, im, v):
    eps = np.array([[e00, re + 1j * im], [re - 1j * im, e11]])
    spec = ModelSpec(
        statistics=Statistics.BOSON, n_levels=2,
        eps_sys=ConstantSchedule(eps),
        reservoirs=(Reservoir(modes=(
            Mode(eps=ConstantSchedule(1.0),
                 coupling=ConstantSchedule(np.array([v, 0.3 * v], dtype=complex))),)),),
    )
    h = build_single_particle_hamiltonian(spec, 0.3)
    assert np.abs(h - h.conj().T).max() < 1e-12


def test_non_hermitian_eps_raises():
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=2,
                     eps_sys=ConstantSchedule(np.array([[0.0, 1.0], [0.0, 0.0]])))
    with pytest.raises(ConfigurationError):
        build_single_particle_hamiltonian(spec, 0.0)


def test_tabulated_outside_domain_raises():
    sched = TabulatedSchedule(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(ConfigurationError):
        sched.value_at(3.0)


def test_quench_schedule_sides():
    sched = QuenchSchedule(initial=1.0, times=(0.0, 2.0), values=(5.0, 7.0))
    assert sched.value_at(0.0, side=-1) == 1.0
    assert sched.value_at(0.0, side=+1) == 5.0
    assert sched.value_at(1.0) == 5.0
    assert sched.value_at(2.0, side=-1) == 5.0
    assert sched.value_at(2.0, side=+1) == 7.0
    assert sched.is_constant_on(0.0, 1.5)
    assert not sched.is_constant_on(0.0, 2.5)


# --- initial correlations ---------------------------------------------------


def test_zero_temperature_filling():
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=2,
                     eps_sys=ConstantSchedule(np.diag([-1.0, 1.0]).astype(complex)))
    data = initial_correlations(spec, PartitionFreeThermal(beta=math.inf, mu=0.0), 0.0)
    assert np.allclose(data.c0, np.diag([1.0, 0.0]))
    assert np.abs(data.p0).max() == 0.0


def test_fermi_matrix_function_against_expm_oracle():
    # independent route: C0 = (expm(beta h) + 1)^(-1) at mu = 0
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=2,
                     eps_sys=ConstantSchedule(np.array([[0.0, 0.2], [0.2, 0.0]])))
    beta = 2.0
    data = initial_correlations(spec, PartitionFreeThermal(beta=beta, mu=0.0), 0.0)
    h = build_single_particle_hamiltonian(spec, 0.0)
    oracle = np.linalg.inv(expm(beta * h) + np.eye(2))
    assert np.abs(data.c0 - oracle).max() < 1e-12
    assert abs(data.c0[0, 1]) > 0.01


def test_partition_free_commutes_with_h():
    spec = single_mode_spec(v=0.4, eps=0.3, eps_b=-0.2)
    data = initial_correlations(spec, PartitionFreeThermal(beta=1.7, mu=0.1), 0.0)
    h = build_single_particle_hamiltonian(spec, 0.0)
    assert np.abs(data.c0 @ h - h @ data.c0).max() < 1e-10
    eigs = np.linalg.eigvalsh(data.c0)
    assert eigs.min() > -1e-10 and eigs.max() < 1 + 1e-10


def test_decoupled_thermal_blocks():
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[0.2]])),
        reservoirs=(uniform_band(3, -1.0, 1.0, 0.2),
                    uniform_band(2, 0.5, 1.5, 0.1)),
    )
    data = initial_correlations(
        spec, DecoupledThermal(reservoir_temps=((1.0, 0.0), (2.0, -0.5)),
                               system_c=np.array([[0.4]])), 0.0)
    assert np.abs(data.c_bath_sys).max() == 0.0
    assert np.abs(data.p_bath_sys).max() == 0.0
    # bath occupations follow each reservoir's own temperature
    energies = [m.eps.value_at(0.0) for m in spec.flat_modes]
    expected = np.concatenate([
        thermal_occupation(energies[:3], 1.0, 0.0, Statistics.FERMION),
        thermal_occupation(energies[3:], 2.0, -0.5, Statistics.FERMION),
    ])
    assert np.allclose(np.diag(data.c_bath).real, expected)


def test_boson_partition_free_needs_mu_below_spectrum():
    spec = single_mode_spec(v=0.1, eps=1.0, eps_b=1.5, statistics=Statistics.BOSON)
    with pytest.raises(DomainError):
        initial_correlations(spec, PartitionFreeThermal(beta=1.0, mu=2.0), 0.0)
    data = initial_correlations(spec, PartitionFreeThermal(beta=1.0, mu=0.0), 0.0)
    assert np.linalg.eigvalsh(data.c0).min() > -1e-10


def test_custom_gaussian_validation():
    spec = single_mode_spec(v=0.2)
    good_c = np.diag([0.3, 0.7]).astype(complex)
    bad_c = np.diag([1.4, 0.2]).astype(complex)     # fermion occupation > 1
    zero_p = np.zeros((2, 2), dtype=complex)
    data = initial_correlations(spec, CustomGaussian(c0=good_c, p0=zero_p), 0.0)
    assert np.allclose(data.c0, good_c)
    with pytest.raises(ValidationError):
        initial_correlations(spec, CustomGaussian(c0=bad_c, p0=zero_p), 0.0)
    bad_p = np.array([[0.0, 0.1], [0.1, 0.0]])      # fermion pairs must be antisymmetric
    with pytest.raises(ValidationError):
        initial_correlations(spec, CustomGaussian(c0=good_c, p0=bad_p), 0.0)


@settings(max_examples=40, deadline=None)
@given(e=st.floats(-5, 5), beta=st.floats(0.01, 50), mu=st.floats(-4, 4))
def test_fermi_occupation_bounds(e, beta, mu):
    f = thermal_occupation([e], beta, mu, Statistics.FERMION)[0]
    assert 0.0 <= f <= 1.0


@settings(max_examples=40, deadline=None)
@given(e=st.floats(0.1, 5), beta=st.floats(0.01, 50))
def test_bose_occupation_nonnegative(e, beta):
    f = thermal_occupation([e], beta, -0.1, Statistics.BOSON)[0]
    assert f >= 0.0


# --- validate_model -----------------------------------------------------------


def test_validate_clean_spec():
    spec = single_mode_spec(v=0.3)
    assert validate_model(spec, TimeGrid(0.0, 5.0, 100)) == []


def test_validate_reports_non_hermitian():
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=2,
                     eps_sys=ConstantSchedule(np.array([[0.0, 1.0], [0.5, 0.0]])))
    msgs = validate_model(spec)
    assert any("Hermitian" in m for m in msgs)


def test_validate_reports_short_tabulated_coverage():
    sched = TabulatedSchedule(np.array([0.0, 1.0]), np.stack([
        np.array([[0.1]]), np.array([[0.2]])]))
    spec = ModelSpec(statistics=Statistics.FERMION, n_levels=1, eps_sys=sched)
    msgs = validate_model(spec, TimeGrid(0.0, 5.0, 50))
    assert any("cover" in m for m in msgs)


def test_validate_reports_bad_coupling_length():
    spec = ModelSpec(
        statistics=Statistics.FERMION, n_levels=2,
        eps_sys=ConstantSchedule(np.zeros((2, 2))),
        reservoirs=(Reservoir(modes=(
            Mode(eps=ConstantSchedule(1.0),
                 coupling=ConstantSchedule(np.array([0.1 + 0j]))),)),),
    )
    msgs = validate_model(spec)
    assert any("length" in m for m in msgs)
