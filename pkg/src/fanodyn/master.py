"""Exact master-equation coefficients and Fock-space time evolution.

The reduced density matrix obeys the homogeneous equation

    drho/dt = -i[H'(t), rho]
              + sum_ij { gamma_ij D(a_j, a_i^dag)
                         + gamma_tilde_ij F(a_j, a_i^dag)
                         + gamma_bar_ij F(a_j^dag, a_i^dag)
                         + (gamma_bar^dag)_ij F(a_j, a_i) }

with superoperators (s = +1 bosons, -1 fermions)

    D(X, Y) rho = 2 X rho Y - Y X rho - rho Y X
    F(X, Y) rho = Y rho X + s X rho Y - s Y X rho - rho X Y

Both are traceless for any operator pair, which is what makes the equation
homogeneous and trace preserving term by term.  The coefficients come from
the Green-function layer; gamma_bar's transposed term is L nu + nu L^T,
the unique reading that keeps gamma_bar in the symmetry class of nu
(symmetric for bosons, antisymmetric for fermions) and the evolution
Hermiticity-preserving.
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import TimeGrid
from .model import Statistics


@dataclass(eq=False)
class FockSpace:
    """Truncated Fock space with mode operators.

    Fermions use Jordan-Wigner strings (n_max forced to 1), bosons truncate
    each mode at n_max quanta; the canonical commutator then fails only in
    the top-level corner, reported by `cutoff_defect`.
    """

    statistics: Statistics
    n_modes: int
    n_max: int = 1

    def __post_init__(self):
        if self.statistics is Statistics.FERMION:
            self.n_max = 1
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        local_dim = self.n_max + 1
        self.dim = local_dim ** self.n_modes
        if self.statistics is Statistics.FERMION:
            lower = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
            z = np.diag([1.0, -1.0]).astype(complex)
            ops = []
            for i in range(self.n_modes):
                factors = [z] * i + [lower] + [np.eye(2, dtype=complex)] * (self.n_modes - 1 - i)
                a = factors[0]
                for f in factors[1:]:
                    a = np.kron(a, f)
                ops.append(a)
        else:
            lower = np.zeros((local_dim, local_dim), dtype=complex)
            for kq in range(1, local_dim):
                lower[kq - 1, kq] = np.sqrt(kq)
            ops = []
            for i in range(self.n_modes):
                factors = ([np.eye(local_dim, dtype=complex)] * i + [lower]
                           + [np.eye(local_dim, dtype=complex)] * (self.n_modes - 1 - i))
                a = factors[0]
                for f in factors[1:]:
                    a = np.kron(a, f)
                ops.append(a)
        self.a = ops
        self.adag = [op.conj().T for op in ops]
        # cached bilinears a_i^dag a_j used by every Liouvillian apply
        self._nij = {(i, j): self.adag[i] @ self.a[j]
                     for i in range(self.n_modes) for j in range(self.n_modes)}

    def number_op(self, i: int) -> np.ndarray:
        return self._nij[(i, i)]

    def adag_a(self, i: int, j: int) -> np.ndarray:
        return self._nij[(i, j)]

    def top_level_projectors(self):
        """Per-mode projector onto the cutoff level (boson leakage monitor)."""
        local_dim = self.n_max + 1
        projs = []
        for i in range(self.n_modes):
            p_local = np.zeros((local_dim, local_dim), dtype=complex)
            p_local[-1, -1] = 1.0
            factors = ([np.eye(local_dim, dtype=complex)] * i + [p_local]
                       + [np.eye(local_dim, dtype=complex)] * (self.n_modes - 1 - i))
            p = factors[0]
            for f in factors[1:]:
                p = np.kron(p, f)
            projs.append(p)
        return projs

    def cutoff_defect(self) -> float:
        """Max deviation of [a_i, a_j^dag]_-+ from delta_ij.  Exactly zero
        for fermions; for bosons the truncation shows up as -(n_max+1) in
        the top-level corner, so this reports that known defect."""
        s = 1.0 if self.statistics is Statistics.BOSON else -1.0
        worst = 0.0
        eye = np.eye(self.dim)
        for i in range(self.n_modes):
            for j in range(self.n_modes):
                comm = self.a[i] @ self.adag[j] - s * self.adag[j] @ self.a[i]
                target = eye if i == j else 0.0
                worst = max(worst, float(np.abs(comm - target).max()))
        return worst


@dataclass(frozen=True, eq=False)
class MasterCoefficients:
    """Coefficient set at one time: renormalized energy and the three rates."""

    eps_prime: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    gamma_bar: np.ndarray


def coefficients(logderiv: np.ndarray, v_nn: np.ndarray, nu_nn: np.ndarray,
                 vdot: np.ndarray, nudot: np.ndarray,
                 statistics: Statistics) -> MasterCoefficients:
    """Assemble the coefficient set from L = udot u^{-1} and the equal-time
    correlation data."""
    lmat = logderiv
    eps_prime = 0.5j * (lmat - lmat.conj().T)
    gamma = -0.5 * (lmat + lmat.conj().T)
    lv = lmat @ v_nn
    gamma_tilde = vdot - (lv + lv.conj().T)
    gamma_tilde = 0.5 * (gamma_tilde + gamma_tilde.conj().T)
    s = statistics.sign
    gamma_bar = 0.5 * s * (lmat @ nu_nn + nu_nn @ lmat.T - nudot)
    return MasterCoefficients(eps_prime=eps_prime, gamma=gamma,
                              gamma_tilde=gamma_tilde, gamma_bar=gamma_bar)


@dataclass(eq=False)
class CoefficientTrajectory:
    eps_prime: np.ndarray     # (T+1, N, N)
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    gamma_bar: np.ndarray

    def at(self, n: int) -> MasterCoefficients:
        return MasterCoefficients(self.eps_prime[n], self.gamma[n],
                                  self.gamma_tilde[n], self.gamma_bar[n])

    def midpoint(self, n: int) -> MasterCoefficients:
        """Linear interpolation between nodes n and n+1."""
        return MasterCoefficients(
            0.5 * (self.eps_prime[n] + self.eps_prime[n + 1]),
            0.5 * (self.gamma[n] + self.gamma[n + 1]),
            0.5 * (self.gamma_tilde[n] + self.gamma_tilde[n + 1]),
            0.5 * (self.gamma_bar[n] + self.gamma_bar[n + 1]),
        )


def assemble_coefficients(logderiv, v_diag, nu_diag, vdot_diag, nudot_diag,
                          statistics: Statistics) -> CoefficientTrajectory:
    nn = logderiv.shape[0]
    shape = logderiv.shape
    out = CoefficientTrajectory(np.zeros(shape, complex), np.zeros(shape, complex),
                                np.zeros(shape, complex), np.zeros(shape, complex))
    for n in range(nn):
        c = coefficients(logderiv[n], v_diag[n], nu_diag[n],
                         vdot_diag[n], nudot_diag[n], statistics)
        out.eps_prime[n] = c.eps_prime
        out.gamma[n] = c.gamma
        out.gamma_tilde[n] = c.gamma_tilde
        out.gamma_bar[n] = c.gamma_bar
    return out


# ---------------------------------------------------------------------------
# Superoperators
# ---------------------------------------------------------------------------


def dissipator(fock: FockSpace, rho: np.ndarray, i: int, j: int) -> np.ndarray:
    """D(a_j, a_i^dag) rho = 2 a_j rho a_i^dag - a_i^dag a_j rho - rho a_i^dag a_j."""
    a_j, nij = fock.a[j], fock.adag_a(i, j)
    return 2.0 * (a_j @ rho @ fock.adag[i]) - nij @ rho - rho @ nij


def fluctuator(rho: np.ndarray, x: np.ndarray, y: np.ndarray,
               statistics: Statistics) -> np.ndarray:
    """F(X, Y) rho = Y rho X + s X rho Y - s Y X rho - rho X Y; traceless for
    any X, Y and either sign."""
    s = statistics.sign
    return y @ rho @ x + s * (x @ rho @ y) - s * (y @ x @ rho) - rho @ (x @ y)


def liouvillian_apply(rho: np.ndarray, coeffs: MasterCoefficients,
                      fock: FockSpace) -> np.ndarray:
    """Right-hand side of the master equation at one time."""
    n = fock.n_modes
    hmat = np.zeros_like(rho)
    for i in range(n):
        for j in range(n):
            if coeffs.eps_prime[i, j] != 0.0:
                hmat = hmat + coeffs.eps_prime[i, j] * fock.adag_a(i, j)
    out = -1j * (hmat @ rho - rho @ hmat)
    stats = fock.statistics
    gbar = coeffs.gamma_bar
    gbar_dag = gbar.conj().T
    use_pairs = np.abs(gbar).max() > 0.0
    for i in range(n):
        for j in range(n):
            if coeffs.gamma[i, j] != 0.0:
                out = out + coeffs.gamma[i, j] * dissipator(fock, rho, i, j)
            if coeffs.gamma_tilde[i, j] != 0.0:
                out = out + coeffs.gamma_tilde[i, j] * fluctuator(
                    rho, fock.a[j], fock.adag[i], stats)
            if use_pairs:
                if gbar[i, j] != 0.0:
                    out = out + gbar[i, j] * fluctuator(
                        rho, fock.adag[j], fock.adag[i], stats)
                if gbar_dag[i, j] != 0.0:
                    out = out + gbar_dag[i, j] * fluctuator(
                        rho, fock.a[j], fock.a[i], stats)
    return out


def nz_form_apply(rho: np.ndarray, chi: np.ndarray, a_ops, b_ops) -> np.ndarray:
    """Symmetric trace-preserving superoperator form

        sum_ij chi_ij [A_j rho B_i + B_i rho A_j - A_j B_i rho - rho B_i A_j];

    its trace vanishes identically for any chi and operator lists."""
    chi = np.asarray(chi)
    if chi.shape != (len(b_ops), len(a_ops)):
        raise ValueError("chi must be (len(B), len(A))")
    out = np.zeros_like(rho)
    for i, b in enumerate(b_ops):
        for j, a in enumerate(a_ops):
            c = chi[i, j]
            if c == 0.0:
                continue
            out = out + c * (a @ rho @ b + b @ rho @ a - (a @ b) @ rho - rho @ (b @ a))
    return out


def moments(rho: np.ndarray, fock: FockSpace):
    """(M, S) with M_ij = <a_j^dag a_i> and S_ij = <a_j a_i>, matching the
    one-body storage convention of the Green-function layer."""
    n = fock.n_modes
    m = np.zeros((n, n), dtype=complex)
    s = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            m[i, j] = np.trace(rho @ fock.adag_a(j, i))
            s[i, j] = np.trace(rho @ (fock.a[j] @ fock.a[i]))
    return m, s


# ---------------------------------------------------------------------------
# Time evolution
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EvolveResult:
    times: np.ndarray
    rhos: np.ndarray              # (T+1, dim, dim)
    trace_drift: np.ndarray       # |tr rho - 1|
    herm_defect: np.ndarray       # pre-symmetrization max |rho - rho^dag|
    min_eig: np.ndarray
    cutoff_leak: np.ndarray       # boson top-level population (0 for fermions)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def evolve(rho0: np.ndarray, traj: CoefficientTrajectory, grid: TimeGrid,
           fock: FockSpace, trace_tol: float = 1e-8,
           herm_tol: float = 1e-9) -> EvolveResult:
    """Classic RK4 with coefficients linearly interpolated at half steps.

    rho is re-symmetrized each step; the pre-symmetrization defect is
    recorded and the run flagged (not silently repaired) if it exceeds
    herm_tol.  Positivity is monitored, never enforced.
    """
    nn = grid.n_nodes
    h = grid.h
    dim = fock.dim
    rhos = np.zeros((nn, dim, dim), dtype=complex)
    rhos[0] = rho0
    trace_drift = np.zeros(nn)
    herm_defect = np.zeros(nn)
    min_eig = np.zeros(nn)
    leak = np.zeros(nn)
    failures = []
    tops = fock.top_level_projectors() if fock.statistics is Statistics.BOSON else None

    def monitors(n, rho):
        trace_drift[n] = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
        min_eig[n] = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
        if tops is not None:
            leak[n] = max(float(np.trace(rho @ p).real) for p in tops)

    monitors(0, rho0)
    for n in range(grid.steps):
        rho = rhos[n]
        c0 = traj.at(n)
        cm = traj.midpoint(n)
        c1 = traj.at(n + 1)
        k1 = liouvillian_apply(rho, c0, fock)
        k2 = liouvillian_apply(rho + 0.5 * h * k1, cm, fock)
        k3 = liouvillian_apply(rho + 0.5 * h * k2, cm, fock)
        k4 = liouvillian_apply(rho + h * k3, c1, fock)
        nxt = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        defect = float(np.abs(nxt - nxt.conj().T).max())
        herm_defect[n + 1] = defect
        nxt = 0.5 * (nxt + nxt.conj().T)
        rhos[n + 1] = nxt
        monitors(n + 1, nxt)
        if defect > herm_tol:
            failures.append(
                f"step {n + 1}: hermiticity defect {defect:.3e} exceeds {herm_tol:.1e}")
            break
        if trace_drift[n + 1] > trace_tol:
            failures.append(
                f"step {n + 1}: trace drift {trace_drift[n + 1]:.3e} exceeds {trace_tol:.1e}")
            break
    return EvolveResult(times=grid.nodes, rhos=rhos, trace_drift=trace_drift,
                        herm_defect=herm_defect, min_eig=min_eig,
                        cutoff_leak=leak, failures=failures)
