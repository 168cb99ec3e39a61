"""Probabilists' Hermite polynomials and the orthonormal product basis.

Conventions: He_i is the probabilists' family, E_{z~N(0,1)}[He_i He_j] = i! δ_ij.
Basis elements are h_p(x) = prod_j He_{p_j}(x_j) / sqrt(prod_j p_j!) for a
multi-index p with total degree between Q and P; this normalization makes the
family orthonormal under the standard Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Factorials are exact in float64 up to 20!; higher degrees are refused rather
# than silently losing precision.
MAX_DEGREE = 20

_QUAD_NODES = 200


def _factorial(n: int) -> float:
    if n > MAX_DEGREE:
        raise ValueError(f"degree {n} exceeds supported maximum {MAX_DEGREE}")
    return float(math.factorial(n))


def hermite(i: int, z):
    """Evaluate He_i at z (scalar or array) by the three-term recurrence."""
    if i < 0:
        raise ValueError("degree must be non-negative")
    z = np.asarray(z, dtype=float)
    if i == 0:
        out = np.ones_like(z)
        return out if out.ndim else float(out)
    if i == 1:
        return z if z.ndim else float(z)
    prev, cur = np.ones_like(z), z
    for n in range(1, i):
        prev, cur = cur, z * cur - n * prev
    return cur if cur.ndim else float(cur)


def hermite_table(max_degree: int, z: np.ndarray) -> np.ndarray:
    """Stack He_0(z)..He_max(z) along a leading axis; z of any shape."""
    z = np.asarray(z, dtype=float)
    out = np.empty((max_degree + 1,) + z.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = z
    for n in range(1, max_degree):
        out[n + 1] = z * out[n] - n * out[n - 1]
    return out


@dataclass(frozen=True)
class BasisIndex:
    """Multi-index p identifying one element of the orthonormal product basis."""

    p: tuple[int, ...]

    def __post_init__(self):
        if any(k < 0 for k in self.p):
            raise ValueError("multi-index entries must be non-negative")
        if self.degree < 2:
            raise ValueError("total degree below 2 is excluded (no constant or linear parts)")
        if any(k > MAX_DEGREE for k in self.p):
            raise ValueError(f"per-coordinate degree exceeds {MAX_DEGREE}")

    @property
    def degree(self) -> int:
        return sum(self.p)

    @property
    def norm_factor(self) -> float:
        """sqrt(prod_j p_j!), the orthonormalizing denominator."""
        return math.sqrt(math.prod(_factorial(k) for k in self.p))


def _compositions(total: int, parts: int):
    """All weak compositions of `total` into `parts` parts, first part largest first."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def enumerate_basis(r: int, Q: int, P: int) -> list[BasisIndex]:
    """All multi-indices with Q <= |p| <= P, ordered by total degree then
    reverse-lexicographically within each degree. The order is fixed so that
    coefficient vectors are comparable across runs."""
    if r < 1:
        raise ValueError("r must be at least 1")
    if Q < 2:
        raise ValueError("Q must be at least 2")
    if P < Q:
        raise ValueError("P must be at least Q")
    out = []
    for s in range(Q, P + 1):
        out.extend(BasisIndex(p) for p in _compositions(s, r))
    return out


def basis_size(r: int, Q: int, P: int) -> int:
    """Closed-form count: sum_{i=Q}^P C(r+i-1, i)."""
    return sum(math.comb(r + i - 1, i) for i in range(Q, P + 1))


def eval_basis(p: BasisIndex, x_head: np.ndarray) -> float:
    """h_p at a single point; x_head holds the first r = len(p) coordinates."""
    x_head = np.asarray(x_head, dtype=float)
    if x_head.shape != (len(p.p),):
        raise ValueError(f"expected {len(p.p)} coordinates, got shape {x_head.shape}")
    val = 1.0
    for k, xj in zip(p.p, x_head):
        val *= hermite(k, xj)
    return val / p.norm_factor


def eval_basis_matrix(basis: list[BasisIndex], X_head: np.ndarray) -> np.ndarray:
    """Evaluate every h_p over columns of X_head (r x M); returns (B x M)."""
    r, _ = X_head.shape
    max_deg = max(max(b.p) for b in basis)
    tab = hermite_table(max_deg, X_head)  # (max_deg+1, r, M)
    out = np.empty((len(basis), X_head.shape[1]))
    for n, b in enumerate(basis):
        acc = tab[b.p[0], 0]
        for j in range(1, r):
            acc = acc * tab[b.p[j], j]
        out[n] = acc / b.norm_factor
    return out


@lru_cache(maxsize=1)
def _gauss_hermite_nodes():
    # Physicists' nodes/weights for weight exp(-t^2); converted to N(0,1) via
    # z = sqrt(2) t, E[g(z)] = (1/sqrt(pi)) sum w_k g(sqrt(2) t_k).
    t, w = np.polynomial.hermite.hermgauss(_QUAD_NODES)
    return np.sqrt(2.0) * t, w / np.sqrt(np.pi)


def gauss_expectation(func) -> float:
    """E_{z~N(0,1)}[func(z)] by fixed 200-node Gauss-Hermite quadrature."""
    z, w = _gauss_hermite_nodes()
    return float(np.dot(w, func(z)))


@lru_cache(maxsize=1)
def _panel_legendre_nodes():
    return np.polynomial.legendre.leggauss(24)


def relu_hermite_coeff(i: int, bias: float) -> float:
    """a_i(b) = E_{z~N(0,1)}[ReLU(z + b) He_i(z)].

    The integrand vanishes below z = -b and is analytic above it, so the
    integral is taken over [-b, -b + 16] on panelled Gauss-Legendre nodes
    (global Gauss-Hermite rules lose several digits to the kink). The
    truncated tail is below 1e-40 for the degrees supported here.
    """
    if i < 0:
        raise ValueError("degree must be non-negative")
    t, w = _panel_legendre_nodes()
    lo = -bias
    edges = np.linspace(lo, lo + 16.0, 33)
    half = 0.5 * (edges[1] - edges[0])
    centers = 0.5 * (edges[:-1] + edges[1:])
    z = (centers[:, None] + half * t[None, :]).ravel()
    weights = half * np.tile(w, len(centers))
    dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return float(np.dot(weights, (z + bias) * hermite(i, z) * dens))


def chi_even_moment(r: int, Q: int) -> float:
    """E_{z~chi_r}[z^{2Q}] = prod_{k=0}^{Q-1} (r + 2k)."""
    if r < 1 or Q < 1:
        raise ValueError("r and Q must be at least 1")
    return float(math.prod(r + 2 * k for k in range(Q)))
