"""Exact reference dynamics of the finite total system.

The Hamiltonian is quadratic, so for Gaussian initial data the one-body
sector is complete: propagating U(t) with i dU/dt = h(t) U gives every
moment via C(t) = U C0 U^dag, P(t) = U P0 U^T, and the system block of U
is the exact open-system propagator the Dyson solver must reproduce.
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .model import (
    ModelSpec,
    GaussianInitialData,
    Statistics,
    build_single_particle_hamiltonian,
)


class UnsupportedScopeError(RuntimeError):
    """Fock-space reconstruction not available for this state; compare
    one-body moments instead."""


class GridMismatchError(ValueError):
    pass


@dataclass(eq=False)
class TotalPropagator:
    grid: TimeGrid
    u: np.ndarray                    # (T+1, D, D)
    unitarity_defects: np.ndarray    # (T+1,) max-norm of U^dag U - 1 before reprojection

    def system_block(self, n_levels: int) -> np.ndarray:
        return self.u[:, :n_levels, :n_levels]


def _reunitarize(u: np.ndarray) -> np.ndarray:
    # polar projection: closest unitary in Frobenius norm
    x, _, yh = np.linalg.svd(u)
    return x @ yh


def total_propagator(spec: ModelSpec, grid: TimeGrid, reproject_every: int = 100,
                     defect_tol: float = 1e-6) -> TotalPropagator:
    """RK4 for i dU/dt = h(t) U, U(t0) = 1, with periodic polar
    reunitarization.  The end-of-step stage samples h at the left limit so
    node-aligned quenches integrate each constant piece cleanly."""
    d = spec.dim
    nn = grid.n_nodes
    h = grid.h
    u = np.zeros((nn, d, d), dtype=complex)
    u[0] = np.eye(d)
    defects = np.zeros(nn)

    def rhs(hmat, umat):
        return -1j * (hmat @ umat)

    for n in range(grid.steps):
        t = grid.node(n)
        h0 = build_single_particle_hamiltonian(spec, t, side=+1)
        hm = build_single_particle_hamiltonian(spec, t + 0.5 * h, side=+1)
        h1 = build_single_particle_hamiltonian(spec, t + h, side=-1)
        k1 = rhs(h0, u[n])
        k2 = rhs(hm, u[n] + 0.5 * h * k1)
        k3 = rhs(hm, u[n] + 0.5 * h * k2)
        k4 = rhs(h1, u[n] + h * k3)
        nxt = u[n] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        m = n + 1
        defects[m] = np.abs(nxt.conj().T @ nxt - np.eye(d)).max()
        if defects[m] > defect_tol:
            raise RuntimeError(
                f"oracle propagator lost unitarity at t={grid.node(m):.6g}: "
                f"defect {defects[m]:.3e}"
            )
        if reproject_every and m % reproject_every == 0:
            nxt = _reunitarize(nxt)
        u[m] = nxt
    return TotalPropagator(grid=grid, u=u, unitarity_defects=defects)


def exact_moments(prop: TotalPropagator, init: GaussianInitialData, n: int):
    """(C(t_n), P(t_n)) of the full system."""
    u = prop.u[n]
    return u @ init.c0 @ u.conj().T, u @ init.p0 @ u.T


def system_moment_trajectory(prop: TotalPropagator, init: GaussianInitialData):
    """System blocks of C(t), P(t) at every node: shapes (T+1, N, N)."""
    n = init.n_levels
    c = np.einsum("tij,jk,tlk->til", prop.u[:, :n, :], init.c0, prop.u[:, :n, :].conj())
    p = np.einsum("tij,jk,tlk->til", prop.u[:, :n, :], init.p0, prop.u[:, :n, :])
    return c, p


def gaussian_fock_state(c_sys: np.ndarray, p_sys: np.ndarray, fock) -> np.ndarray:
    """Density matrix of a Gaussian state from its system one-body blocks.

    Supported scope: fermions with diagonal C and zero pairs (product of
    levels), and a single boson mode with zero pairs (thermal Fock form).
    Anything richer raises UnsupportedScopeError; compare moments instead.
    """
    c_sys = np.asarray(c_sys, dtype=complex)
    p_sys = np.zeros_like(c_sys) if p_sys is None else np.asarray(p_sys, dtype=complex)
    n = c_sys.shape[0]
    off_tol = 1e-10
    if np.abs(p_sys).max() > off_tol:
        raise UnsupportedScopeError("pair correlations in the reduced state")
    if fock.statistics is Statistics.FERMION:
        if np.abs(c_sys - np.diag(np.diag(c_sys))).max() > off_tol:
            raise UnsupportedScopeError("off-diagonal fermion one-body block")
        rho = np.ones((1, 1), dtype=complex)
        for i in range(n):
            occ = float(np.real(c_sys[i, i]))
            rho = np.kron(rho, np.diag([1.0 - occ, occ]).astype(complex))
        return rho
    if n != 1:
        raise UnsupportedScopeError("multi-mode boson reconstruction")
    nbar = float(np.real(c_sys[0, 0]))
    ks = np.arange(fock.n_max + 1)
    if nbar <= 0:
        weights = np.zeros(fock.n_max + 1)
        weights[0] = 1.0
    else:
        weights = (nbar / (1.0 + nbar)) ** ks / (1.0 + nbar)
    return np.diag(weights.astype(complex))


def exact_reduced_density(prop: TotalPropagator, init: GaussianInitialData,
                          n: int, fock) -> np.ndarray:
    c, p = exact_moments(prop, init, n)
    nl = init.n_levels
    return gaussian_fock_state(c[:nl, :nl], p[:nl, :nl], fock)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(rho1 - rho2)).sum())


# ---------------------------------------------------------------------------
# Error reports
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RunOutputs:
    """Solver-stack quantities to be checked against the oracle."""

    grid: TimeGrid
    u_col: np.ndarray = None          # (T+1, N, N) Dyson u(t_n, t0)
    gless_diag: np.ndarray = None     # (T+1, N, N) equal-time G<
    moments: np.ndarray = None        # (T+1, N, N) <a_j^dag a_i> from rho_S
    rho_traj: np.ndarray = None       # (T+1, dim, dim)


@dataclass(eq=False)
class OracleOutputs:
    grid: TimeGrid
    u_block: np.ndarray = None
    c_sys: np.ndarray = None
    rho_traj: np.ndarray = None


@dataclass(eq=False)
class ComparisonReport:
    t: np.ndarray
    u_err: np.ndarray
    gless_err: np.ndarray
    moment_err: np.ndarray
    trace_dist: np.ndarray
    trace_dist_is_moment_proxy: bool = False
    tolerances: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def max_errors(self) -> dict:
        def mx(a):
            a = a[np.isfinite(a)]
            return float(a.max()) if a.size else float("nan")

        return {
            "u_err": mx(self.u_err),
            "gless_err": mx(self.gless_err),
            "moment_err": mx(self.moment_err),
            "trace_dist": mx(self.trace_dist),
        }


def _maxnorm_traj(a, b):
    return np.abs(a - b).reshape(a.shape[0], -1).max(axis=1)


def compare(run: RunOutputs, orc: OracleOutputs, tolerances=None) -> ComparisonReport:
    """Time-resolved max-norm errors of the stack against the oracle."""
    if (run.grid.t0, run.grid.t_final, run.grid.steps) != (
            orc.grid.t0, orc.grid.t_final, orc.grid.steps):
        raise GridMismatchError("run and oracle grids differ")
    nn = run.grid.n_nodes
    nan = np.full(nn, np.nan)
    u_err = gless_err = moment_err = tdist = nan
    if run.u_col is not None and orc.u_block is not None:
        u_err = _maxnorm_traj(run.u_col, orc.u_block)
    if run.gless_diag is not None and orc.c_sys is not None:
        gless_err = _maxnorm_traj(run.gless_diag, 1j * orc.c_sys)
    if run.moments is not None and orc.c_sys is not None:
        moment_err = _maxnorm_traj(run.moments, orc.c_sys)
    proxy = False
    if run.rho_traj is not None and orc.rho_traj is not None:
        tdist = np.array([trace_distance(run.rho_traj[k], orc.rho_traj[k])
                          for k in range(nn)])
    elif run.moments is not None and orc.c_sys is not None:
        tdist = moment_err
        proxy = True

    tolerances = dict(tolerances or {})
    report = ComparisonReport(
        t=run.grid.nodes, u_err=u_err, gless_err=gless_err,
        moment_err=moment_err, trace_dist=tdist,
        trace_dist_is_moment_proxy=proxy, tolerances=tolerances,
    )
    for key, arr in (("u_err", u_err), ("gless_err", gless_err),
                     ("moment_err", moment_err), ("trace_dist", tdist)):
        tol = tolerances.get(key)
        vals = arr[np.isfinite(arr)]
        if tol is not None and vals.size and vals.max() > tol:
            report.failures.append(f"{key}: max {vals.max():.3e} exceeds {tol:.3e}")
    return report


def convergence_ratios(report_h: ComparisonReport, report_h2: ComparisonReport) -> dict:
    """Max-error ratios coarse/fine; ~4 signals second order."""
    coarse = report_h.max_errors()
    fine = report_h2.max_errors()
    out = {}
    for key in coarse:
        if np.isfinite(coarse[key]) and np.isfinite(fine[key]) and fine[key] > 0:
            out[key] = coarse[key] / fine[key]
    return out
