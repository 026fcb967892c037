"""Fano-Anderson model description and Gaussian initial one-body data.

The model is a set of discrete levels linearly coupled to reservoirs of
modes, all parameters optionally time dependent.  Units use hbar = 1, so
energies and inverse times share one unit and inverse temperature beta
carries inverse energy.

One-body matrices run over the combined index c = (a_1..a_N, b_1..b_K)
with the system levels first.  The storage convention throughout is

    C[m, n] = <c_n^dag c_m>        P[m, n] = <c_n c_m>

i.e. row index = annihilated mode.  Under the one-body propagator U this
gives C(t) = U C0 U^dag and P(t) = U P0 U^T.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

HERM_TOL = 1e-12


class ConfigurationError(ValueError):
    """Model or schedule description is unusable as given."""


class DomainError(ValueError):
    """Parameters outside the physically meaningful domain."""


class ValidationError(ValueError):
    """User-supplied Gaussian data violates a state invariant."""


class Statistics(Enum):
    BOSON = "boson"
    FERMION = "fermion"

    @property
    def sign(self) -> int:
        """+1 for bosons, -1 for fermions: the upper/lower sign choice."""
        return +1 if self is Statistics.BOSON else -1


# ---------------------------------------------------------------------------
# Parameter schedules
# ---------------------------------------------------------------------------
#
# Three forms: constant, piecewise-constant quench, tabulated-on-grid.
# Evaluation is two-sided: side=+1 gives the right limit, side=-1 the left
# limit.  Only quenches distinguish the two; the left limit at t0 is how a
# partition-free preparation Hamiltonian differs from the run Hamiltonian.


@dataclass(frozen=True, eq=False)
class ConstantSchedule:
    value: object

    def value_at(self, t, side=+1):
        return self.value

    def covers(self, t0, t1):
        return True

    def is_constant_on(self, t0, t1):
        return True


@dataclass(frozen=True, eq=False)
class QuenchSchedule:
    """Piecewise-constant: `initial` before the first jump, then values[i]
    for t >= times[i].  Jumps must sit on grid nodes for clean quadrature."""

    initial: object
    times: tuple
    values: tuple

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ConfigurationError("quench schedule needs matching, nonempty times/values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigurationError("quench times must be strictly increasing")

    def value_at(self, t, side=+1):
        idx = -1
        for k, tk in enumerate(self.times):
            if (tk <= t) if side >= 0 else (tk < t):
                idx = k
            else:
                break
        return self.initial if idx < 0 else self.values[idx]

    def covers(self, t0, t1):
        return True

    def is_constant_on(self, t0, t1):
        # right-continuous node sampling: a jump at or before t0 is invisible
        return not any(t0 < tk <= t1 for tk in self.times)


@dataclass(frozen=True, eq=False)
class TabulatedSchedule:
    """Linear interpolation through (times, values); values may be arrays."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values))
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ConfigurationError("tabulated schedule needs >= 2 samples")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("tabulated times must be strictly increasing")
        if self.values.shape[0] != self.times.shape[0]:
            raise ConfigurationError("tabulated values must match times in length")

    def value_at(self, t, side=+1):
        ts = self.times
        slack = 1e-9 * max(1.0, abs(ts[-1] - ts[0]))
        if t < ts[0] - slack or t > ts[-1] + slack:
            raise ConfigurationError(f"tabulated schedule undefined at t={t}")
        t = min(max(t, ts[0]), ts[-1])
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def covers(self, t0, t1):
        slack = 1e-9 * max(1.0, abs(self.times[-1] - self.times[0]))
        return self.times[0] <= t0 + slack and self.times[-1] >= t1 - slack

    def is_constant_on(self, t0, t1):
        return bool(np.all(self.values == self.values[0]))


def as_schedule(value):
    """Wrap a bare number/array as a ConstantSchedule; pass schedules through."""
    if hasattr(value, "value_at"):
        return value
    return ConstantSchedule(value)


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mode:
    """One reservoir mode: real energy eps(t), length-N complex coupling V(t)."""

    eps: object
    coupling: object


@dataclass(frozen=True, eq=False)
class Reservoir:
    modes: tuple


@dataclass(frozen=True, eq=False)
class ModelSpec:
    statistics: Statistics
    n_levels: int
    eps_sys: object           # Schedule -> (N, N) Hermitian
    reservoirs: tuple = ()

    @property
    def flat_modes(self):
        return tuple(m for r in self.reservoirs for m in r.modes)

    @property
    def k_total(self) -> int:
        return len(self.flat_modes)

    @property
    def dim(self) -> int:
        return self.n_levels + self.k_total

    def eps_sys_at(self, t, side=+1) -> np.ndarray:
        e = np.asarray(self.eps_sys.value_at(t, side), dtype=complex)
        e = e.reshape(self.n_levels, self.n_levels)
        return e

    def coupling_matrix(self, t, side=+1) -> np.ndarray:
        """V[i, m] for level i, flattened mode m, shape (N, K)."""
        k = self.k_total
        v = np.zeros((self.n_levels, k), dtype=complex)
        for m, mode in enumerate(self.flat_modes):
            v[:, m] = np.asarray(mode.coupling.value_at(t, side), dtype=complex).reshape(-1)
        return v

    def mode_energies(self, t, side=+1) -> np.ndarray:
        return np.array(
            [float(np.real(m.eps.value_at(t, side))) for m in self.flat_modes]
        )

    def is_static_on(self, t0, t1) -> bool:
        """True when every schedule is constant on (t0, t1] under node
        sampling; quenches at t0 (partition-free preparation) still count."""
        scheds = [self.eps_sys]
        for m in self.flat_modes:
            scheds += [m.eps, m.coupling]
        return all(s.is_constant_on(t0, t1) for s in scheds)


def uniform_band(n_modes, e_min, e_max, rate, n_levels=1, level=0):
    """Reservoir of n_modes uniform over [e_min, e_max] emulating a flat
    (wide-band) environment with decay rate `rate`.

    Couplings follow |V|^2 = rate * d_eps / (2 pi), the discretization of a
    constant spectral density; the emulation is faithful up to the bath
    recurrence time 2*pi/d_eps.
    """
    if n_modes < 2:
        raise ConfigurationError("uniform_band needs at least 2 modes")
    energies = np.linspace(e_min, e_max, n_modes)
    d_eps = energies[1] - energies[0]
    v = math.sqrt(rate * d_eps / (2.0 * math.pi))
    modes = []
    for e in energies:
        coup = np.zeros(n_levels, dtype=complex)
        coup[level] = v
        modes.append(Mode(eps=ConstantSchedule(float(e)), coupling=ConstantSchedule(coup)))
    return Reservoir(modes=tuple(modes))


# ---------------------------------------------------------------------------
# One-body Hamiltonian
# ---------------------------------------------------------------------------


def build_single_particle_hamiltonian(spec: ModelSpec, t, side=+1) -> np.ndarray:
    """Assemble h(t): system block eps_sys(t), diagonal bath block, coupling
    column V_im(t) in h[i, N+m] (and its conjugate below the diagonal)."""
    n, k = spec.n_levels, spec.k_total
    h = np.zeros((n + k, n + k), dtype=complex)
    eps = spec.eps_sys_at(t, side)
    if np.abs(eps - eps.conj().T).max() > 1e-10:
        raise ConfigurationError(f"eps_sys({t}) is not Hermitian")
    h[:n, :n] = 0.5 * (eps + eps.conj().T)
    if k:
        h[n:, n:] = np.diag(spec.mode_energies(t, side))
        v = spec.coupling_matrix(t, side)
        h[:n, n:] = v
        h[n:, :n] = v.conj().T
    return h


# ---------------------------------------------------------------------------
# Gaussian initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianInitialData:
    """Total-system one-body matrices C0, P0 at t0 (convention in module
    docstring).  All initial correlations the kernels ever need live in the
    blocks of these two matrices."""

    c0: np.ndarray
    p0: np.ndarray
    n_levels: int
    statistics: Statistics

    def __post_init__(self):
        object.__setattr__(self, "c0", np.asarray(self.c0, dtype=complex))
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=complex))

    # block accessors; s = system rows/cols, b = bath
    @property
    def c_sys(self):
        n = self.n_levels
        return self.c0[:n, :n]

    @property
    def c_bath(self):
        n = self.n_levels
        return self.c0[n:, n:]

    @property
    def c_bath_sys(self):
        """Csb[m, j] = <a_j^dag b_m>, shape (K, N)."""
        n = self.n_levels
        return self.c0[n:, :n]

    @property
    def p_sys(self):
        n = self.n_levels
        return self.p0[:n, :n]

    @property
    def p_bath(self):
        n = self.n_levels
        return self.p0[n:, n:]

    @property
    def p_bath_sys(self):
        """Psb[m, j] = <a_j b_m>, shape (K, N)."""
        n = self.n_levels
        return self.p0[n:, :n]

    def diagnostics(self) -> list:
        out = []
        c, p = self.c0, self.p0
        if c.shape != p.shape or c.shape[0] != c.shape[1]:
            return [f"C0/P0 shape mismatch: {c.shape} vs {p.shape}"]
        if np.abs(c - c.conj().T).max() > 1e-10:
            out.append("C0 is not Hermitian")
        else:
            eigs = np.linalg.eigvalsh(c)
            if self.statistics is Statistics.FERMION:
                if eigs.min() < -1e-10 or eigs.max() > 1 + 1e-10:
                    out.append("fermion C0 eigenvalues outside [0, 1]")
            elif eigs.min() < -1e-10:
                out.append("boson C0 not positive semidefinite")
        sym = self.statistics.sign
        if np.abs(p - sym * p.T).max() > 1e-10:
            kind = "symmetric" if sym > 0 else "antisymmetric"
            out.append(f"P0 is not {kind}")
        return out


@dataclass(frozen=True)
class PartitionFreeThermal:
    """Thermal state of the full coupled Hamiltonian h(t0^-); carries
    system-bath correlations.  beta may be math.inf (ground-state filling)."""

    beta: float
    mu: float = 0.0


@dataclass(frozen=True, eq=False)
class DecoupledThermal:
    """System in a given Gaussian one-body state, each reservoir thermal at
    its own (beta, mu); all system-bath blocks vanish by construction.
    `reservoir_temps` may hold one pair (applied to every reservoir) or one
    pair per reservoir."""

    reservoir_temps: tuple
    system_c: np.ndarray
    system_p: np.ndarray = None


@dataclass(frozen=True, eq=False)
class CustomGaussian:
    c0: np.ndarray
    p0: np.ndarray


def thermal_occupation(energies, beta, mu, statistics: Statistics) -> np.ndarray:
    """Fermi/Bose occupation f(e) = 1/(exp(beta(e-mu)) -+ 1), beta=inf ok."""
    e = np.asarray(energies, dtype=float)
    if statistics is Statistics.FERMION:
        if math.isinf(beta):
            return np.where(e < mu, 1.0, np.where(e > mu, 0.0, 0.5))
        from scipy.special import expit

        return expit(-beta * (e - mu))
    if np.any(e <= mu):
        raise DomainError("boson thermal state needs mu < all energies")
    if math.isinf(beta):
        return np.zeros_like(e)
    x = beta * (e - mu)
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(x)
    return np.where(np.isfinite(occ), occ, 0.0)


def _matrix_occupation(h, beta, mu, statistics):
    evals, vecs = np.linalg.eigh(h)
    if statistics is Statistics.BOSON and evals.min() <= mu:
        raise DomainError(
            f"boson partition-free state needs mu < min eig(h) = {evals.min():.6g}"
        )
    occ = thermal_occupation(evals, beta, mu, statistics)
    return (vecs * occ) @ vecs.conj().T


def initial_correlations(spec: ModelSpec, init, t0) -> GaussianInitialData:
    """Build the Gaussian one-body data (C0, P0) of the requested initial
    state.  Partition-free states are thermal in h(t0^-), i.e. the left
    limit, so a quench placed at t0 separates preparation from run."""
    d = spec.dim
    n = spec.n_levels
    if isinstance(init, PartitionFreeThermal):
        h0 = build_single_particle_hamiltonian(spec, t0, side=-1)
        c0 = _matrix_occupation(h0, init.beta, init.mu, spec.statistics)
        p0 = np.zeros((d, d), dtype=complex)
    elif isinstance(init, DecoupledThermal):
        temps = list(init.reservoir_temps)
        if len(temps) == 1:
            temps = temps * max(len(spec.reservoirs), 1)
        if len(temps) < len(spec.reservoirs):
            raise ConfigurationError("one (beta, mu) pair per reservoir required")
        c0 = np.zeros((d, d), dtype=complex)
        p0 = np.zeros((d, d), dtype=complex)
        cs = np.asarray(init.system_c, dtype=complex).reshape(n, n)
        c0[:n, :n] = cs
        if init.system_p is not None:
            p0[:n, :n] = np.asarray(init.system_p, dtype=complex).reshape(n, n)
        offset = n
        for res, (beta, mu) in zip(spec.reservoirs, temps):
            for mode in res.modes:
                e = float(np.real(mode.eps.value_at(t0, side=-1)))
                c0[offset, offset] = thermal_occupation([e], beta, mu, spec.statistics)[0]
                offset += 1
    elif isinstance(init, CustomGaussian):
        c0 = np.asarray(init.c0, dtype=complex)
        p0 = np.asarray(init.p0, dtype=complex)
        if c0.shape != (d, d) or p0.shape != (d, d):
            raise ValidationError(f"custom Gaussian data must be {d}x{d}")
    else:
        raise ConfigurationError(f"unknown initial state spec {type(init).__name__}")

    data = GaussianInitialData(c0=c0, p0=p0, n_levels=n, statistics=spec.statistics)
    problems = data.diagnostics()
    if problems:
        raise ValidationError("; ".join(problems))
    return data


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_model(spec: ModelSpec, grid=None) -> list:
    """Collect human-readable diagnostics; empty list means all invariants
    hold.  Reports, never raises."""
    out = []
    if spec.n_levels < 1:
        out.append("n_levels must be >= 1")
        return out
    if grid is not None:
        sample_times = list(grid.nodes[:: max(1, grid.steps // 8)]) + [grid.t_final]
        t0, t1 = grid.t0, grid.t_final
    else:
        sample_times = [0.0]
        t0 = t1 = None

    def check_coverage(name, sched):
        if t0 is not None and not sched.covers(t0, t1):
            out.append(f"{name}: schedule does not cover the run interval")
            return False
        return True

    ok = check_coverage("eps_sys", spec.eps_sys)
    for t in sample_times if ok else []:
        try:
            e = spec.eps_sys_at(t)
        except (ConfigurationError, ValueError) as exc:
            out.append(f"eps_sys: {exc}")
            break
        if np.abs(e - e.conj().T).max() > 1e-10:
            out.append(f"eps_sys({t:g}) is not Hermitian")
            break
    for r_i, res in enumerate(spec.reservoirs):
        for m_i, mode in enumerate(res.modes):
            label = f"reservoir {r_i} mode {m_i}"
            if not (check_coverage(label + " eps", mode.eps)
                    and check_coverage(label + " coupling", mode.coupling)):
                continue
            try:
                e = mode.eps.value_at(sample_times[0])
                if abs(complex(e).imag) > 1e-12:
                    out.append(f"{label}: mode energy must be real")
                v = np.asarray(mode.coupling.value_at(sample_times[0])).reshape(-1)
                if v.shape != (spec.n_levels,):
                    out.append(f"{label}: coupling must have length {spec.n_levels}")
            except (ConfigurationError, ValueError) as exc:
                out.append(f"{label}: {exc}")
    return out
