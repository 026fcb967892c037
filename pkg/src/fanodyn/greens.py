"""Two-time propagator (Dyson equation) and correlation Green functions.

The retarded propagator u(t, t_m) solves the Volterra integro-differential
equation

    du/dt + i eps(t) u(t, t_m) + int_{t_m}^t g(t, tau) u(tau, t_m) dtau = 0

marched with a second-order predictor-corrector: an explicit step using the
trapezoid history integral predicts the new node, one correction applies
the implicit trapezoid weight there.  The non-Markovian u has no group
property, so interior start times generally need one solve per column; for
schedules that are constant on the run u(t_n, t_m) = u(t_{n-m}, t_0) and a
single column suffices (the marching recursions are identical term by
term, which `tests` verify).

The correlation functions

    v(a, b)  = int int u g~ u^dag      nu(a, b) = int int u gbar u^T

collapse, for the bath-bath kernels, to Q[a] Cbb Q[b]^dag with
Q[a] = int_{t0}^{t_a} u(t_a, s) W(s)^T ds -- the same trapezoid values as
the literal double sum, reorganized so no square kernel table is ever
materialized.  System-bath boundary terms come from `kernels`.
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .kernels import KernelSamples, PhaseTable
from .model import ModelSpec, GaussianInitialData


class SingularPropagatorError(RuntimeError):
    """u(t, t0) lost invertibility; master coefficients genuinely diverge."""

    def __init__(self, time, sigma_min):
        super().__init__(
            f"propagator singular at t={time:.6g} (smallest singular value "
            f"{sigma_min:.3e}); coefficients diverge here"
        )
        self.time = time
        self.sigma_min = sigma_min


SINGULAR_RTOL = 1e-8


# ---------------------------------------------------------------------------
# Volterra marching
# ---------------------------------------------------------------------------


def _march_column(eps_nodes, grow, grid: TimeGrid, m: int) -> np.ndarray:
    """Solve the Dyson equation from start node m; returns u(t_n, t_m) for
    n = m..T as an ((T-m)+1, N, N) array.  `grow(n)` supplies g(t_n, t_k)
    for k = 0..n."""
    h = grid.h
    nmax = grid.steps
    nlev = eps_nodes.shape[1]
    eye = np.eye(nlev, dtype=complex)
    ucol = np.zeros((nmax - m + 1, nlev, nlev), dtype=complex)
    ucol[0] = eye

    for n in range(m, nmax):
        j = n - m
        row_n = grow(n)
        if j == 0:
            hist_n = np.zeros((nlev, nlev), dtype=complex)
        elif j == 1:
            hist_n = 0.5 * h * (row_n[m] @ ucol[0] + row_n[n] @ ucol[1])
        else:
            w = np.full(j + 1, h)
            w[0] = w[-1] = 0.5 * h
            hist_n = np.einsum("k,kab,kbc->ac", w, row_n[m:n + 1], ucol[: j + 1])
        f_n = -1j * (eps_nodes[n] @ ucol[j]) - hist_n

        upred = ucol[j] + h * f_n

        row_next = grow(n + 1)
        if j == 0:
            hist_p = 0.5 * h * (row_next[m] @ ucol[0] + row_next[n + 1] @ upred)
        else:
            w = np.full(j + 2, h)
            w[0] = w[-1] = 0.5 * h
            hist_p = np.einsum("k,kab,kbc->ac", w[:-1], row_next[m:n + 1], ucol[: j + 1])
            hist_p = hist_p + 0.5 * h * (row_next[n + 1] @ upred)
        f_p = -1j * (eps_nodes[n + 1] @ upred) - hist_p

        ucol[j + 1] = ucol[j] + 0.5 * h * (f_n + f_p)
    return ucol


@dataclass(eq=False)
class TwoTimeField:
    """u(t_n, t_m) on the triangular grid plus udot u^{-1} per node.

    Static models store one column and shift; general models store columns
    for every start index.
    """

    grid: TimeGrid
    n_levels: int
    static: bool
    col0: np.ndarray                  # (T+1, N, N): u(t_n, t0)
    columns: list = None              # columns[m][n-m] = u(t_n, t_m) (general)
    logderiv: np.ndarray = None       # (T+1, N, N), filled on demand

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    def u(self, n: int, m: int) -> np.ndarray:
        if m > n:
            raise ValueError("two-time propagator defined for m <= n")
        if self.static:
            return self.col0[n - m]
        return self.columns[m][n - m]

    def row(self, a: int) -> np.ndarray:
        """u(t_a, t_k) for k = 0..a, shape (a+1, N, N)."""
        if self.static:
            return self.col0[: a + 1][::-1]
        return np.stack([self.columns[k][a - k] for k in range(a + 1)])

    def singular_values(self, n: int) -> np.ndarray:
        return np.linalg.svd(self.col0[n], compute_uv=False)


def solve_dyson(spec: ModelSpec, kernels: KernelSamples, grid: TimeGrid,
                start_index: int = 0) -> np.ndarray:
    """One row family {u(t_n, t_m)}_{n >= m} of the Dyson equation."""
    eps_nodes = np.stack([spec.eps_sys_at(t, side=+1) for t in grid.nodes])
    return _march_column(eps_nodes, kernels.g_row, grid, start_index)


def build_two_time_field(spec: ModelSpec, kernels: KernelSamples,
                         grid: TimeGrid) -> TwoTimeField:
    """Solve for all start indices (one column each), or one column plus
    index shifting when the model is static on the run interval."""
    eps_nodes = np.stack([spec.eps_sys_at(t, side=+1) for t in grid.nodes])
    if spec.is_static_on(grid.t0, grid.t_final):
        col0 = _march_column(eps_nodes, kernels.g_row, grid, 0)
        return TwoTimeField(grid=grid, n_levels=spec.n_levels, static=True, col0=col0)
    columns = [
        _march_column(eps_nodes, kernels.g_row, grid, m)
        for m in range(grid.n_nodes)
    ]
    return TwoTimeField(grid=grid, n_levels=spec.n_levels, static=False,
                        col0=columns[0], columns=columns)


# ---------------------------------------------------------------------------
# Log derivative udot u^{-1}
# ---------------------------------------------------------------------------


def log_derivative(spec: ModelSpec, kernels: KernelSamples, grid: TimeGrid,
                   field_: TwoTimeField, n: int) -> np.ndarray:
    """udot(t_n, t0) u^{-1}(t_n, t0), evaluated from the Dyson equation
    itself (never by differencing u):

        udot u^{-1} = -i eps(t_n) - [int g(t_n, s) u(s, t0) ds] u^{-1}.
    """
    eps_n = spec.eps_sys_at(grid.node(n), side=+1)
    u_n = field_.col0[n]
    sv = np.linalg.svd(u_n, compute_uv=False)
    if sv[-1] < SINGULAR_RTOL * max(sv[0], 1.0):
        raise SingularPropagatorError(grid.node(n), float(sv[-1]))
    if n == 0:
        return -1j * eps_n
    w = grid.trapezoid_weights(n)
    hist = np.einsum("k,kab,kbc->ac", w, kernels.g_row(n)[: n + 1], field_.col0[: n + 1])
    return -1j * eps_n - hist @ np.linalg.inv(u_n)


def attach_log_derivatives(spec: ModelSpec, kernels: KernelSamples,
                           grid: TimeGrid, field_: TwoTimeField) -> np.ndarray:
    out = np.zeros_like(field_.col0)
    for n in range(grid.n_nodes):
        out[n] = log_derivative(spec, kernels, grid, field_, n)
    field_.logderiv = out
    return out


# ---------------------------------------------------------------------------
# Correlation Green functions
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CorrelationPair:
    """v(tau, t) and nu(tau, t) through cached half-transformed integrals.

    q[a] = int u(t_a, s) W(s)^T ds   (N, K)
    r_v[a], r_nu[a] = int u(t_a, s) A(s) ds   (N, N) boundary partials
    """

    grid: TimeGrid
    kernels: KernelSamples
    q: np.ndarray
    r_v: np.ndarray = None
    r_nu: np.ndarray = None
    u_col: np.ndarray = None
    v_diag: np.ndarray = None
    nu_diag: np.ndarray = None
    vdot_diag: np.ndarray = None
    nudot_diag: np.ndarray = None
    fd_consistency: np.ndarray = None

    def v(self, a: int, b: int) -> np.ndarray:
        out = self.q[a] @ self.kernels.init.c_bath @ self.q[b].conj().T
        if self.r_v is not None:
            out = out + 0.5 * (self.r_v[a] @ self.u_col[b].conj().T
                               + self.u_col[a] @ self.r_v[b].conj().T)
        return out

    def nu(self, a: int, b: int) -> np.ndarray:
        out = -self.q[a] @ self.kernels.init.p_bath @ self.q[b].T
        if self.r_nu is not None:
            s = self.kernels.statistics.sign
            out = out + 0.5 * (self.r_nu[a] @ self.u_col[b].T
                               + s * self.u_col[a] @ self.r_nu[b].T)
        return out


def build_correlations(field_: TwoTimeField, kernels: KernelSamples,
                       grid: TimeGrid) -> CorrelationPair:
    nn = grid.n_nodes
    nlev = field_.n_levels
    k = kernels.phases.dressed.shape[1]
    wdr = kernels.phases.dressed
    amat_v = kernels.boundary_matrix_v()
    amat_nu = kernels.boundary_matrix_nu()
    q = np.zeros((nn, nlev, k), dtype=complex)
    r_v = np.zeros((nn, nlev, nlev), dtype=complex) if amat_v is not None else None
    r_nu = np.zeros((nn, nlev, nlev), dtype=complex) if amat_nu is not None else None
    for a in range(1, nn):
        w = grid.trapezoid_weights(a)
        row = field_.row(a)
        if k:
            q[a] = np.einsum("k,kij,kmj->im", w, row, wdr[: a + 1])
        if r_v is not None:
            r_v[a] = np.einsum("k,kij,kjl->il", w, row, amat_v[: a + 1])
        if r_nu is not None:
            r_nu[a] = np.einsum("k,kij,kjl->il", w, row, amat_nu[: a + 1])

    corr = CorrelationPair(grid=grid, kernels=kernels, q=q, r_v=r_v, r_nu=r_nu,
                           u_col=field_.col0)
    corr.v_diag = np.stack([corr.v(a, a) for a in range(nn)])
    corr.nu_diag = np.stack([corr.nu(a, a) for a in range(nn)])
    corr.vdot_diag, corr.nudot_diag, corr.fd_consistency = equal_time_derivatives(
        corr.v_diag, corr.nu_diag, grid.h)
    return corr


def correlation_v(corr: CorrelationPair, a: int, b: int) -> np.ndarray:
    return corr.v(a, b)


def correlation_nu(corr: CorrelationPair, a: int, b: int) -> np.ndarray:
    return corr.nu(a, b)


def _diag_derivative(d: np.ndarray, h: float) -> np.ndarray:
    """Second-order finite difference along the equal-time diagonal:
    centered inside, one-sided (3-point) at both ends."""
    out = np.zeros_like(d)
    out[1:-1] = (d[2:] - d[:-2]) / (2.0 * h)
    out[0] = (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * h)
    out[-1] = (3.0 * d[-1] - 4.0 * d[-2] + d[-3]) / (2.0 * h)
    return out


def equal_time_derivatives(v_diag: np.ndarray, nu_diag: np.ndarray, h: float):
    """d/dt of the equal-time v and nu, plus a coarse-vs-fine difference
    diagnostic (h against 2h stencils; large values flag an under-resolved
    grid)."""
    if v_diag.shape[0] < 4:
        raise ValueError("grid too coarse for second-order diagonal derivatives")
    vdot = _diag_derivative(v_diag, h)
    nudot = _diag_derivative(nu_diag, h)
    scale = max(float(np.abs(vdot).max()), 1e-12)
    consistency = np.zeros(v_diag.shape[0])
    coarse = (v_diag[4:] - v_diag[:-4]) / (4.0 * h)
    consistency[2:-2] = np.abs(coarse - vdot[2:-2]).reshape(coarse.shape[0], -1).max(axis=1) / scale
    return vdot, nudot, consistency


def lesser_green(field_: TwoTimeField, corr: CorrelationPair,
                 init: GaussianInitialData, a: int, b: int):
    """(G<, Gbar<) at (tau_a, t_b):

        G<(tau, t)    = u(tau, t0) [i C0_ss] u^dag(t, t0) + i v(tau, t)
        Gbar<(tau, t) = u(tau, t0) [i P0_ss] u^T(t, t0)  + i nu(tau, t)

    with G<_ij = i <a_j^dag a_i> so the system block of C feeds in without
    index gymnastics.
    """
    ua, ub = field_.col0[a], field_.col0[b]
    gl = ua @ (1j * init.c_sys) @ ub.conj().T + 1j * corr.v(a, b)
    gbar = ua @ (1j * init.p_sys) @ ub.T + 1j * corr.nu(a, b)
    return gl, gbar
