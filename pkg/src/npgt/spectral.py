"""
Eigenstructure of the linearized gradient-tracking system.

The compact system matrix is ``A_h = A0_h + eta * A1`` with

    A0_h = [[Lxi (x) I, 0], [H (Lxi (x) I), Lxi (x) I]],   A1 = [[0, -I], [0, -H]]

where ``Lxi = L @ diag(xi)`` is the sector-scaled Laplacian and ``H`` the
block-diagonal Hessian at an operating point.  This module classifies its
spectrum, evaluates first-order eigenvalue perturbation and the matching
distance bound, and derives the admissible step-rate ``eta_bar``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize
from scipy.linalg import block_diag
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

ZERO_TOL_SCALE = 1e-8
ETA_MAX = 10.0
ETA_GRID = 10_000


@dataclass(frozen=True)
class CompactSystemMatrix:
    A0: np.ndarray
    A1: np.ndarray
    eta: float
    n: int
    p: int
    L: np.ndarray
    H: np.ndarray
    xi: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.A0 + self.eta * self.A1

    def at(self, eta: float) -> "CompactSystemMatrix":
        return CompactSystemMatrix(self.A0, self.A1, eta, self.n, self.p, self.L, self.H, self.xi)


def inf_norm(M) -> float:
    return float(np.abs(M).sum(axis=1).max()) if np.size(M) else 0.0


def assemble(L, H_blocks, xi=None, eta: float = 0.0) -> CompactSystemMatrix:
    """Block assembly of ``A0_h`` and ``A1``.

    Parameters
    ----------
    L : ndarray, shape (n, n)
        Laplacian (diagonal = minus row sums).
    H_blocks : ndarray, shape (n, p, p)
        Local Hessians at the operating point.
    xi : ndarray, shape (n,) or (n*p,), optional
        Sector ratios ``h(z)/z``; ones (the linear case) by default.
    eta : float
        Gradient-tracking step-rate.
    """
    L = np.asarray(L, dtype=float)
    H_blocks = np.asarray(H_blocks, dtype=float)
    n = L.shape[0]
    if H_blocks.ndim != 3 or H_blocks.shape[0] != n or H_blocks.shape[1] != H_blocks.shape[2]:
        raise ValueError(f"H_blocks must have shape (n, p, p) with n={n}, got {H_blocks.shape}")
    p = H_blocks.shape[1]
    xi = np.ones(n * p) if xi is None else np.asarray(xi, dtype=float).reshape(-1)
    if xi.size == n:
        xi = np.repeat(xi, p)
    if xi.size != n * p:
        raise ValueError(f"xi must have n or n*p entries, got {xi.size}")
    Lxi = np.kron(L, np.eye(p)) * xi[None, :]
    H = block_diag(*H_blocks)
    Z = np.zeros((n * p, n * p))
    A0 = np.block([[Lxi, Z], [H @ Lxi, Lxi]])
    A1 = np.block([[Z, -np.eye(n * p)], [Z, -H]])
    return CompactSystemMatrix(A0, A1, float(eta), n, p, L, H, xi)


def default_zero_tol(M: CompactSystemMatrix) -> float:
    return ZERO_TOL_SCALE * inf_norm(M.A)


@dataclass(frozen=True)
class EigenStructure:
    zero_count: int
    lhp_count: int
    rhp_count: int
    max_nonzero_real: float
    eigenvalues: np.ndarray

    def __iter__(self):
        return iter((self.zero_count, self.lhp_count, self.rhp_count, self.max_nonzero_real))


def eigen_structure(M: CompactSystemMatrix | np.ndarray, zero_tol: float | None = None) -> EigenStructure:
    """Count zero / left- / right-half-plane eigenvalues of ``A_h``."""
    A = M.A if isinstance(M, CompactSystemMatrix) else np.asarray(M, dtype=float)
    if zero_tol is None:
        zero_tol = ZERO_TOL_SCALE * inf_norm(A)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as err:
        raise RuntimeError(f"eigenvalue solver did not converge: {err}") from err
    zero = np.abs(ev) <= zero_tol
    rest = ev[~zero]
    return EigenStructure(
        zero_count=int(zero.sum()),
        lhp_count=int((rest.real < 0).sum()),
        rhp_count=int((rest.real >= 0).sum()),
        max_nonzero_real=float(rest.real.max()) if rest.size else -math.inf,
        eigenvalues=ev,
    )


def _null_bases(M: CompactSystemMatrix):
    """Right basis V and bi-orthogonal left basis U of the 2p-fold zero eigenvalue of A0_h."""
    n, p = M.n, M.p
    ones = np.kron(np.ones((n, 1)), np.eye(p))
    r = ones / M.xi[:, None]
    Z = np.zeros_like(ones)
    V = np.block([[r, Z], [Z, r]]) / math.sqrt(n)
    # left null rows: [1 (x) I, 0] and [-(H (1 (x) I))^T, (1 (x) I)^T]
    U0 = np.block([[ones.T, Z.T], [-(M.H @ ones).T, ones.T]]) / math.sqrt(n)
    U = np.linalg.solve(U0 @ V, U0)
    return U, V


def lemma1_reduced_matrix(M: CompactSystemMatrix, tol: float = 1e-10):
    """First-order reduced matrix ``U A1 V`` for the zero eigenvalues of ``A0_h``.

    Its eigenvalues are the derivatives at ``eta = 0`` of the eigenvalues of
    ``A_h`` that start at zero: p stay at zero and p move with slope given by
    the eigenvalues of ``-(1/n) sum_i H_i`` (linear case).

    Returns
    -------
    R : ndarray, shape (2p, 2p)
    eigenvalues : ndarray, shape (2p,)
    """
    lap_zeros = int((np.abs(np.linalg.eigvals(M.L)) <= ZERO_TOL_SCALE * max(1.0, inf_norm(M.L))).sum())
    if lap_zeros != 1:
        raise ValueError(f"Laplacian has {lap_zeros} zero eigenvalues; a simple one is required")
    U, V = _null_bases(M)
    if np.abs(U @ V - np.eye(2 * M.p)).max() > tol:
        raise ValueError("left/right zero eigenvectors are not bi-orthonormal")
    if np.abs(U @ M.A0).max() > 1e-8 * max(1.0, inf_norm(M.A0)) or \
            np.abs(M.A0 @ V).max() > 1e-8 * max(1.0, inf_norm(M.A0)):
        raise ValueError("zero eigenvalue of the Laplacian is not simple for this operating point")
    R = U @ M.A1 @ V
    return R, np.linalg.eigvals(R)


# -- matching distance -------------------------------------------------------

def _has_perfect_matching(ok: np.ndarray) -> bool:
    match = maximum_bipartite_matching(csr_matrix(ok.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


def matching_distance(spec_a, spec_b) -> float:
    """Optimal matching (bottleneck) distance between two equal-size spectra.

    ``min_pi max_k |a_k - b_pi(k)|``, found by binary search over the
    candidate pair distances with a perfect-matching feasibility test.
    """
    a = np.asarray(spec_a, dtype=complex).reshape(-1)
    b = np.asarray(spec_b, dtype=complex).reshape(-1)
    if a.size != b.size:
        raise ValueError("spectra must have equal cardinality")
    if a.size == 0:
        return 0.0
    D = np.abs(a[:, None] - b[None, :])
    cands = np.unique(D)
    lo, hi = 0, len(cands) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(D <= cands[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cands[lo])


def matching_bound(M: CompactSystemMatrix, eta: float | None = None) -> float:
    """``4 (||A0_h|| + ||A_h||)^(1 - 1/np) ||eta A1||^(1/np)`` in the infinity norm."""
    eta = M.eta if eta is None else eta
    k = M.n * M.p
    A = M.A0 + eta * M.A1
    pert = inf_norm(eta * M.A1)
    if pert == 0:
        return 0.0
    return 4 * (inf_norm(M.A0) + inf_norm(A)) ** (1 - 1 / k) * pert ** (1 / k)


# -- admissible step-rate ----------------------------------------------------

def hessian_row_norm(H) -> float:
    """``phi = max_i sum_j |H_ij|`` of the block-diagonal Hessian."""
    H = np.asarray(H)
    if H.ndim == 3:
        return float(np.abs(H).sum(axis=2).max())
    return inf_norm(H)


def eta_bound(eta, K_upper, phi, n, p):
    """Norm-based perturbation bound as a function of eta.

    For ``phi < 1``: ``(2K + 2 phi + max{2K + phi (2K + eta), 2K + eta})^(1-1/np) eta^(1/np)``;
    otherwise: ``4 (4K + phi (4K + eta))^(1-1/np) (eta phi)^(1/np)``.
    """
    k = n * p
    eta = np.asarray(eta, dtype=float)
    if phi < 1:
        base = 2 * K_upper + 2 * phi + np.maximum(2 * K_upper + phi * (2 * K_upper + eta), 2 * K_upper + eta)
        return base ** (1 - 1 / k) * eta ** (1 / k)
    return 4 * (4 * K_upper + phi * (4 * K_upper + eta)) ** (1 - 1 / k) * (eta * phi) ** (1 / k)


def eta_bar(kappa, K_upper, phi, n, p, lambda3_abs, eta_max: float = ETA_MAX,
            grid_points: int = ETA_GRID) -> float:
    """Largest eta whose perturbation bound stays below ``kappa * lambda3_abs``.

    The bound is increasing in eta, so the answer is the crossing point of
    ``|bound(eta) - kappa * lambda3_abs|``.  It is bracketed on a grid that is
    logarithmic in eta (the crossing typically sits many decades below 1) and
    polished with Brent's method on ``log eta``.  Returns 0 with a warning
    when no positive eta qualifies.
    """
    gap = kappa * lambda3_abs
    if gap <= 0:
        return 0.0
    if kappa <= 0 or K_upper <= 0 or phi <= 0:
        raise ValueError("kappa, K_upper and phi must be positive")
    k = n * p
    # bound ~ C eta^(1/k): the crossing sits near k * log10(gap / C); start well below it
    guess = k * (math.log10(gap) - math.log10(float(eta_bound(1.0, K_upper, phi, n, p))))
    log_lo = max(-300.0, min(guess, 0.0) - 30.0)
    grid = np.logspace(log_lo, math.log10(eta_max), grid_points)
    below = eta_bound(grid, K_upper, phi, n, p) < gap
    if not below[0]:
        warnings.warn("no positive eta keeps the perturbation bound below the spectral gap")
        return 0.0
    if below[-1]:
        return float(eta_max)
    j = int(np.argmin(below))

    def excess(log_eta):
        return math.log(float(eta_bound(math.exp(log_eta), K_upper, phi, n, p))) - math.log(gap)

    root = optimize.brentq(excess, math.log(grid[j - 1]), math.log(grid[j]), xtol=1e-12, rtol=1e-12)
    eta = math.exp(root)
    # stay on the admissible side of the crossing
    while eta_bound(eta, K_upper, phi, n, p) >= gap:
        eta = np.nextafter(eta, 0.0)
    return float(eta)


def predicted_rate(M: CompactSystemMatrix, eta: float | None = None, zero_tol=None) -> float:
    """Largest real part among the non-zero eigenvalues of ``A_h`` (negative when stable)."""
    if eta is not None:
        M = M.at(eta)
    es = eigen_structure(M, zero_tol)
    if es.rhp_count:
        raise ValueError(f"{es.rhp_count} eigenvalues in the right half-plane")
    return es.max_nonzero_real


# -- sector relations --------------------------------------------------------

def sector_envelope_holds(L, xi, kappa, K_upper, tol=1e-10) -> bool:
    """Whether the spectra of ``L diag(xi)`` and ``L`` admit a pairing with
    ``kappa |mu| <= |lambda| <= K |mu|`` for every pair."""
    lam = np.linalg.eigvals(np.asarray(L) * np.asarray(xi)[None, :])
    mu = np.linalg.eigvals(np.asarray(L))
    ml, mm = np.abs(lam)[:, None], np.abs(mu)[None, :]
    ok = (ml >= kappa * mm - tol) & (ml <= K_upper * mm + tol)
    return _has_perfect_matching(ok)


def pair_spectra(a, b):
    """Pairing of two spectra minimising the summed distance (for slope tracking)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    rows, cols = linear_sum_assignment(np.abs(a[:, None] - b[None, :]))
    return a[rows], b[cols]


# -- report ------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: list
    zero_count: int
    lhp_count: int
    rhp_count: int
    max_nonzero_real: float
    matching_distance: float
    matching_bound: float
    eta: float
    eta_bar: float
    algebraic_connectivity: float
    predicted_rate: float | None
    n: int
    p: int

    @property
    def zero_structure_holds(self) -> bool:
        return self.zero_count == self.p and self.rhp_count == 0

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["eigenvalues"] = [[float(z.real), float(z.imag)] for z in self.eigenvalues]
        doc["zero_structure_holds"] = self.zero_structure_holds
        return doc

    def summary(self) -> str:
        lines = [
            f"system size        : {2 * self.n * self.p} (n={self.n}, p={self.p})",
            f"eta / eta_bar      : {self.eta:.6g} / {self.eta_bar:.6g}",
            f"zero / LHP / RHP   : {self.zero_count} / {self.lhp_count} / {self.rhp_count}",
            f"max non-zero Re    : {self.max_nonzero_real:.6g}",
            f"matching distance  : {self.matching_distance:.6g} (bound {self.matching_bound:.6g})",
            f"algebraic conn.    : {self.algebraic_connectivity:.6g}",
            f"p zeros, none RHP  : {'yes' if self.zero_structure_holds else 'NO'}",
        ]
        return "\n".join(lines)


def spectral_report(L, H_blocks, xi=None, eta: float = 0.0, kappa: float = 1.0,
                    K_upper: float = 1.0, zero_tol=None) -> SpectralReport:
    """Assemble ``A_h`` and collect its eigenstructure, bounds and ``eta_bar``."""
    from .graph import algebraic_connectivity

    M = assemble(L, H_blocks, xi, eta)
    es = eigen_structure(M, zero_tol)
    ev0 = np.linalg.eigvals(M.A0)
    lam3 = algebraic_connectivity(L)
    eb = eta_bar(kappa, K_upper, hessian_row_norm(H_blocks), M.n, M.p, lam3)
    return SpectralReport(
        eigenvalues=list(es.eigenvalues),
        zero_count=es.zero_count, lhp_count=es.lhp_count, rhp_count=es.rhp_count,
        max_nonzero_real=es.max_nonzero_real,
        matching_distance=matching_distance(es.eigenvalues, ev0),
        matching_bound=matching_bound(M),
        eta=float(eta), eta_bar=eb, algebraic_connectivity=lam3,
        predicted_rate=None if es.rhp_count else es.max_nonzero_real,
        n=M.n, p=M.p,
    )
