"""Memory kernel and initial-correlation kernels on the time grid.

All kernels factor through the dressed couplings

    W[n, m, i] = V_im(t_n) * exp(-i phi_m(t_n)),

with phi_m the accumulated mode phase, so a kernel value is a small matrix
product instead of an O(K^2) double sum:

    g(a, b)        = W[a]^T conj(W[b])                  (dissipation)
    g~bb(a, b)     = W[a]^T Cbb conj(W[b])              (bath particle-particle)
    gbar_bb(a, b)  = -W[a]^T Pbb W[b]                   (bath pair)

The system-bath kernels carry delta(tau - t0) factors.  Those are never
put on the grid: they are collapsed analytically into single-integral
boundary contributions to v and nu (sb_boundary_v / sb_boundary_nu).  A
delta sitting exactly at the integration endpoint t0 collapses with half
weight; together with the -2i prefactor of the printed kernels this is the
unique convention under which the finite-model propagation reproduces the
lesser Green functions (the exact oracle fixes it, see tests).
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .model import ModelSpec, GaussianInitialData, Statistics, thermal_occupation


@dataclass(frozen=True, eq=False)
class PhaseTable:
    """Accumulated mode phases and dressed couplings on the grid.

    phi[n, m] = int_{t0}^{t_n} eps_m(tau) dtau by per-interval trapezoid with
    two-sided endpoint evaluation, so piecewise-constant mode energies with
    jumps on nodes integrate exactly.
    """

    grid: TimeGrid
    phi: np.ndarray       # (T+1, K) real
    dressed: np.ndarray   # (T+1, K, N) complex
    static: bool = False  # parameters constant on the run: g(a, b) = g(a-b, 0)

    @classmethod
    def build(cls, spec: ModelSpec, grid: TimeGrid) -> "PhaseTable":
        nn = grid.n_nodes
        k = spec.k_total
        phi = np.zeros((nn, k))
        ts = grid.nodes
        if k:
            e_right = np.stack([spec.mode_energies(t, side=+1) for t in ts])
            e_left = np.stack([spec.mode_energies(t, side=-1) for t in ts])
            incr = 0.5 * grid.h * (e_right[:-1] + e_left[1:])
            phi[1:] = np.cumsum(incr, axis=0)
        dressed = np.zeros((nn, k, spec.n_levels), dtype=complex)
        for n, t in enumerate(ts):
            dressed[n] = spec.coupling_matrix(t, side=+1).T * np.exp(-1j * phi[n])[:, None]
        return cls(grid=grid, phi=phi, dressed=dressed,
                   static=spec.is_static_on(grid.t0, grid.t_final))


def memory_kernel(phases: PhaseTable, n_t: int, n_tau: int) -> np.ndarray:
    """g(t, tau) for grid nodes t = t_{n_t} >= tau = t_{n_tau}."""
    if n_tau > n_t:
        raise ValueError(f"memory kernel needs tau <= t, got nodes {n_tau} > {n_t}")
    w = phases.dressed
    return w[n_t].T @ w[n_tau].conj()


@dataclass(eq=False)
class KernelSamples:
    """Lazy, memoized kernel rows on the grid.

    g rows are triangular (k <= n, what the Volterra marcher consumes);
    the bath-bath correlation kernels live on the full square grid.  Rows
    are cached after first evaluation; fill sequentially before sharing
    across workers.
    """

    phases: PhaseTable
    init: GaussianInitialData
    statistics: Statistics
    _g_rows: dict = field(default_factory=dict)
    _g_lags: np.ndarray = None
    _gtil_rows: dict = field(default_factory=dict)
    _gbar_rows: dict = field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.phases.grid

    @property
    def n_levels(self) -> int:
        return self.init.n_levels

    # -- dissipation kernel ------------------------------------------------

    def g_row(self, n: int) -> np.ndarray:
        """g(t_n, t_k) for k = 0..n, shape (n+1, N, N)."""
        if self.phases.static:
            # one lag table serves every row: g(n, k) = g(n-k, 0)
            if self._g_lags is None:
                w = self.phases.dressed
                self._g_lags = np.matmul(w.transpose(0, 2, 1), w[0].conj()[None, :, :])
            return self._g_lags[: n + 1][::-1]
        row = self._g_rows.get(n)
        if row is None:
            w = self.phases.dressed
            row = np.matmul(w[n].T[None, :, :], w[: n + 1].conj())
            self._g_rows[n] = row
        return row

    def g(self, a: int, b: int) -> np.ndarray:
        return memory_kernel(self.phases, a, b)

    # -- bath-bath kernels ---------------------------------------------------

    def gtil_bb_row(self, a: int) -> np.ndarray:
        row = self._gtil_rows.get(a)
        if row is None:
            w = self.phases.dressed
            left = w[a].T @ self.init.c_bath           # (N, K)
            row = np.matmul(left[None, :, :], w.conj())
            self._gtil_rows[a] = row
        return row

    def gbar_bb_row(self, a: int) -> np.ndarray:
        row = self._gbar_rows.get(a)
        if row is None:
            w = self.phases.dressed
            left = w[a].T @ self.init.p_bath
            row = -np.matmul(left[None, :, :], w)
            self._gbar_rows[a] = row
        return row

    def particle_kernel_bb(self, a: int, b: int) -> np.ndarray:
        return self.gtil_bb_row(a)[b]

    def pair_kernel_bb(self, a: int, b: int) -> np.ndarray:
        return self.gbar_bb_row(a)[b]

    # -- collapsed system-bath boundary kernels ------------------------------
    #
    # A_v[k] = -2i W[k]^T Csb and A_nu[k] = -2i W[k]^T Psb are the matrices
    # the deltas leave behind once collapsed.

    def boundary_matrix_v(self) -> np.ndarray:
        csb = self.init.c_bath_sys
        if not csb.size or not np.any(csb):
            return None
        return -2j * np.einsum("kmi,mj->kij", self.phases.dressed, csb)

    def boundary_matrix_nu(self) -> np.ndarray:
        psb = self.init.p_bath_sys
        if not psb.size or not np.any(psb):
            return None
        return -2j * np.einsum("kmi,mj->kij", self.phases.dressed, psb)


def particle_kernel_bb(kernels: KernelSamples, a: int, b: int) -> np.ndarray:
    return kernels.particle_kernel_bb(a, b)


def pair_kernel_bb(kernels: KernelSamples, a: int, b: int) -> np.ndarray:
    return kernels.pair_kernel_bb(a, b)


def _boundary_partial(kernels, u_field, x: int, amat) -> np.ndarray:
    """int_{t0}^{t_x} u(t_x, s) A(s) ds by trapezoid."""
    n = kernels.n_levels
    if amat is None or x == 0:
        return np.zeros((n, n), dtype=complex)
    w = kernels.grid.trapezoid_weights(x)
    return np.einsum("k,kij,kjl->il", w, u_field.row(x), amat[: x + 1])


def sb_boundary_v(kernels: KernelSamples, u_field, a: int, b: int) -> np.ndarray:
    """Collapsed system-bath contribution to v(tau_a, t_b).

    Zero whenever the system-bath block of C0 vanishes, or when the
    couplings vanish after t0 (the kernel carries V(tau1) factors).
    """
    amat = kernels.boundary_matrix_v()
    n = kernels.n_levels
    if amat is None:
        return np.zeros((n, n), dtype=complex)
    if max(a, b) >= u_field.n_nodes:
        raise RuntimeError("propagator rows missing for requested times")
    r_a = _boundary_partial(kernels, u_field, a, amat)
    r_b = _boundary_partial(kernels, u_field, b, amat)
    return 0.5 * (r_a @ u_field.u(b, 0).conj().T + u_field.u(a, 0) @ r_b.conj().T)


def sb_boundary_nu(kernels: KernelSamples, u_field, a: int, b: int) -> np.ndarray:
    """Collapsed system-bath pair contribution to nu(tau_a, t_b); the
    statistics sign enters the symmetrized (i<->j, tau1<->tau2) term."""
    amat = kernels.boundary_matrix_nu()
    n = kernels.n_levels
    if amat is None:
        return np.zeros((n, n), dtype=complex)
    if max(a, b) >= u_field.n_nodes:
        raise RuntimeError("propagator rows missing for requested times")
    s = kernels.statistics.sign
    r_a = _boundary_partial(kernels, u_field, a, amat)
    r_b = _boundary_partial(kernels, u_field, b, amat)
    return 0.5 * (r_a @ u_field.u(b, 0).T + s * u_field.u(a, 0) @ r_b.T)


def thermal_bb_kernel(spec: ModelSpec, phases: PhaseTable, reservoir_temps,
                      a: int, b: int) -> np.ndarray:
    """Closed-form particle kernel of a decoupled thermal environment:
    sum_m V(tau_a) V*(tau_b) e^{-i(phi_a - phi_b)} f(eps_m).  Independent
    reduction path used to cross-check the generic bath-bath kernel."""
    temps = list(reservoir_temps)
    if len(temps) == 1 and len(spec.reservoirs) > 1:
        temps = temps * len(spec.reservoirs)
    occ = []
    t0 = phases.grid.t0
    for res, (beta, mu) in zip(spec.reservoirs, temps):
        for mode in res.modes:
            e = float(np.real(mode.eps.value_at(t0, side=-1)))
            occ.append(thermal_occupation([e], beta, mu, spec.statistics)[0])
    occ = np.asarray(occ)
    w = phases.dressed
    return (w[a].T * occ) @ w[b].conj()
