"""End-to-end drivers: model -> kernels -> greens -> master coefficients.

Thin orchestration over the layer modules so the CLI, the scripts and the
tests all build runs the same way.
"""

from dataclasses import dataclass

import numpy as np

from .grids import TimeGrid
from .kernels import KernelSamples, PhaseTable
from .greens import (TwoTimeField, CorrelationPair, attach_log_derivatives,
                     build_correlations, build_two_time_field, lesser_green)
from .master import (CoefficientTrajectory, FockSpace, EvolveResult,
                     assemble_coefficients, evolve, moments)
from .model import (GaussianInitialData, ModelSpec, Statistics,
                    initial_correlations, validate_model)
from . import oracle
from .model import ConfigurationError


@dataclass(eq=False)
class GreensStack:
    spec: ModelSpec
    init: GaussianInitialData
    grid: TimeGrid
    phases: PhaseTable
    kernels: KernelSamples
    field: TwoTimeField
    corr: CorrelationPair
    logderiv: np.ndarray
    coeffs: CoefficientTrajectory

    def occupations(self) -> np.ndarray:
        """Diagonal of -i G<(t,t) = <a_i^dag a_i>(t), shape (T+1, N)."""
        u = self.field.col0
        m = np.einsum("tij,jk,tlk->til", u, self.init.c_sys, u.conj()) + self.corr.v_diag
        return np.real(np.einsum("tii->ti", m))

    def equal_time_gless(self) -> np.ndarray:
        u = self.field.col0
        m = np.einsum("tij,jk,tlk->til", u, self.init.c_sys, u.conj()) + self.corr.v_diag
        return 1j * m

    def u_spectral_norms(self) -> np.ndarray:
        return np.array([np.linalg.svd(u, compute_uv=False)[0]
                         for u in self.field.col0])


def build_greens_stack(spec: ModelSpec, init_spec, grid: TimeGrid,
                       with_coefficients: bool = True) -> GreensStack:
    problems = validate_model(spec, grid)
    if problems:
        raise ConfigurationError("; ".join(problems))
    init = initial_correlations(spec, init_spec, grid.t0)
    phases = PhaseTable.build(spec, grid)
    kernels = KernelSamples(phases=phases, init=init, statistics=spec.statistics)
    field = build_two_time_field(spec, kernels, grid)
    corr = build_correlations(field, kernels, grid)
    logderiv = coeffs = None
    if with_coefficients:
        logderiv = attach_log_derivatives(spec, kernels, grid, field)
        coeffs = assemble_coefficients(logderiv, corr.v_diag, corr.nu_diag,
                                       corr.vdot_diag, corr.nudot_diag,
                                       spec.statistics)
    return GreensStack(spec=spec, init=init, grid=grid, phases=phases,
                       kernels=kernels, field=field, corr=corr,
                       logderiv=logderiv, coeffs=coeffs)


def default_boson_cutoff(stack: GreensStack, floor: float = 1e-8,
                         n_cap: int = 60) -> int:
    """Smallest n_max with (nbar/(1+nbar))^n_max below `floor`, using the
    largest occupation the run reaches (computed from the greens layer)."""
    nbar = float(stack.occupations().max())
    if nbar <= 0:
        return 2
    ratio = nbar / (1.0 + nbar)
    n_max = 2
    while ratio ** n_max >= floor and n_max < n_cap:
        n_max += 1
    return n_max


def initial_reduced_density(stack: GreensStack, fock: FockSpace) -> np.ndarray:
    """rho_S(t0) reconstructed from the Gaussian one-body data."""
    return oracle.gaussian_fock_state(stack.init.c_sys, stack.init.p_sys, fock)


@dataclass(eq=False)
class MasterRun:
    stack: GreensStack
    fock: FockSpace
    result: EvolveResult

    def moment_trajectory(self) -> np.ndarray:
        out = np.zeros((len(self.result.times), self.fock.n_modes,
                        self.fock.n_modes), dtype=complex)
        for k, rho in enumerate(self.result.rhos):
            out[k] = moments(rho, self.fock)[0]
        return out

    def occupations(self) -> np.ndarray:
        nums = [np.real(np.diag(self.fock.number_op(i)))
                for i in range(self.fock.n_modes)]
        pops = np.real(np.einsum("tkk->tk", self.result.rhos))
        return np.stack([pops @ w for w in nums], axis=1)

    def purity(self) -> np.ndarray:
        return np.real(np.einsum("tij,tji->t", self.result.rhos, self.result.rhos))


def run_master(stack: GreensStack, fock: FockSpace = None,
               rho0: np.ndarray = None, **evolve_kw) -> MasterRun:
    if fock is None:
        if stack.spec.statistics is Statistics.FERMION:
            fock = FockSpace(Statistics.FERMION, stack.spec.n_levels)
        else:
            fock = FockSpace(Statistics.BOSON, stack.spec.n_levels,
                             default_boson_cutoff(stack))
    if rho0 is None:
        rho0 = initial_reduced_density(stack, fock)
    result = evolve(rho0, stack.coeffs, stack.grid, fock, **evolve_kw)
    return MasterRun(stack=stack, fock=fock, result=result)


def oracle_outputs_for(stack: GreensStack, fock: FockSpace = None,
                       want_rho: bool = False) -> oracle.OracleOutputs:
    prop = oracle.total_propagator(stack.spec, stack.grid)
    c_sys, _ = oracle.system_moment_trajectory(prop, stack.init)
    rho_traj = None
    if want_rho and fock is not None:
        rho_traj = np.stack([
            oracle.exact_reduced_density(prop, stack.init, n, fock)
            for n in range(stack.grid.n_nodes)
        ])
    nlev = stack.spec.n_levels
    return oracle.OracleOutputs(grid=stack.grid,
                                u_block=prop.u[:, :nlev, :nlev],
                                c_sys=c_sys, rho_traj=rho_traj)
