"""Dev check: the ME moment equations must close as operator identities.

Expected (L = -i eps' - gamma, M_ij = <adag_j a_i>, S_ij = <a_j a_i>):
    dM/dt = L M + M L^dag + gamma_tilde
    dS/dt = L S + S L^T - 2 s gamma_bar      (s = +1 boson, -1 fermion)

for ANY rho (the superoperators are quadratic, the hierarchy closes
exactly).  This pins the gamma_bar pairing/sign in liouvillian_apply.
"""
import numpy as np

from fanodyn.master import FockSpace, MasterCoefficients, liouvillian_apply, moments
from fanodyn.model import Statistics

rng = np.random.default_rng(7)


def random_coeffs(n, stats):
    def herm(x):
        return 0.5 * (x + x.conj().T)

    eps = herm(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    gam = herm(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    gtil = herm(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    s = stats.sign
    gbar = 0.5 * (raw + s * raw.T)   # symmetric boson / antisymmetric fermion
    return MasterCoefficients(eps, gam, gtil, gbar)


def random_rho(dim, fock=None, margin=0):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    if margin and fock is not None:
        # keep support away from the cutoff so the CCR holds where it matters
        local = fock.n_max + 1
        keep = np.ones(1)
        for _ in range(fock.n_modes):
            mask = np.ones(local)
            mask[local - margin:] = 0.0
            keep = np.kron(keep, mask)
        proj = np.diag(keep)
        rho = proj @ rho @ proj
    return rho / np.trace(rho)


for stats, n, nmax, margin in [(Statistics.FERMION, 2, 1, 0), (Statistics.BOSON, 2, 8, 3),
                               (Statistics.FERMION, 3, 1, 0), (Statistics.BOSON, 1, 12, 3)]:
    fock = FockSpace(stats, n, nmax)
    worst_m = worst_s = 0.0
    for _ in range(20):
        coeffs = random_coeffs(n, stats)
        rho = random_rho(fock.dim, fock, margin)
        drho = liouvillian_apply(rho, coeffs, fock)
        m, s_mom = moments(rho, fock)
        dm = np.array([[np.trace(drho @ fock.adag_a(j, i)) for j in range(n)]
                       for i in range(n)])
        ds = np.array([[np.trace(drho @ (fock.a[j] @ fock.a[i])) for j in range(n)]
                       for i in range(n)])
        lmat = -1j * coeffs.eps_prime - coeffs.gamma
        dm_expect = lmat @ m + m @ lmat.conj().T + coeffs.gamma_tilde
        ssign = stats.sign
        ds_expect = lmat @ s_mom + s_mom @ lmat.T - 2.0 * ssign * coeffs.gamma_bar
        worst_m = max(worst_m, np.abs(dm - dm_expect).max())
        worst_s = max(worst_s, np.abs(ds - ds_expect).max())
    print(f"{stats.value:8s} N={n} n_max={nmax}: |dM err| = {worst_m:.3e}  "
          f"|dS err| = {worst_s:.3e}")
