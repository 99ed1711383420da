"""Discretized state spaces.

Two kinds of Hilbert space are supported:

* :class:`QuadratureSpace` -- functions sampled at fixed quadrature nodes,
  states are arrays of shape ``(n_nodes, ncomp)``.
* :class:`GaussianSpace` -- ``L^2(R)`` restricted to finite sums of
  polynomial-times-Gaussian terms ``p(x) exp(-beta x^2 - kappa x)`` with a
  fixed width ``beta``; inner products use closed-form Gaussian moments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

def composite_gauss_legendre(lo: float, hi: float, n_sub: int, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``[lo, hi]``."""
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(lo, hi, n_sub + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wx = (half[:, None] * w[None, :]).ravel()
    return x, wx


class QuadratureSpace:
    """Weighted discrete ``L^2`` space; states have shape ``(n_nodes, ncomp)``."""

    kind = "quadrature"

    def __init__(self, nodes: np.ndarray, weights: np.ndarray, ncomp: int = 1):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (nodes.shape[0],):
            raise ValueError("one weight per node required")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        self.nodes = nodes
        self.weights = weights
        self.ncomp = int(ncomp)
        self._wflat = np.repeat(weights, self.ncomp)
        # set for uniform periodic grids, where spectral derivatives are available
        self.period = None

    @classmethod
    def tensor_gauss_legendre(cls, lo: float, hi: float, n_sub: int, n_nodes: int, dim: int = 2, ncomp: int = 2):
        x, w = composite_gauss_legendre(lo, hi, n_sub, n_nodes)
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        wgrid = np.ones_like(grids[0])
        for g in np.meshgrid(*([w] * dim), indexing="ij"):
            wgrid = wgrid * g
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        return cls(nodes, wgrid.ravel(), ncomp)

    @classmethod
    def uniform_periodic(cls, lo: float, hi: float, n: int, ncomp: int = 1):
        x = lo + (hi - lo) * np.arange(n) / n
        space = cls(x, np.full(n, (hi - lo) / n), ncomp)
        space.period = hi - lo
        return space

    @classmethod
    def euclidean(cls, n: int):
        """``R^n`` / ``C^n`` with the plain Euclidean inner product."""
        return cls(np.arange(n, dtype=float), np.ones(n), 1)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def embed(self, state):
        """Bring a state into this space (analytic terms are sampled at the nodes)."""
        if isinstance(state, GTerms):
            if self.nodes.shape[1] != 1 or self.ncomp != 1:
                raise ValueError("Gaussian terms live on the real line")
            return state.evaluate(self.nodes[:, 0])[:, None]
        state = np.asarray(state)
        return state.reshape(self.size, self.ncomp)

    def embed_columns(self, cols):
        """Columns given as one Gaussian term each are sampled to ``(n, 1, k)``."""
        if isinstance(cols, GTerms):
            return cols.evaluate_terms(self.nodes[:, 0])[:, None, :]
        return np.asarray(cols)

    def zeros(self, dtype=float):
        return np.zeros((self.size, self.ncomp), dtype=dtype)

    def inner(self, a, b) -> complex:
        return np.sum(self._wflat * np.conj(np.ravel(a)) * np.ravel(b))

    def norm_sq(self, a) -> float:
        a = np.ravel(a)
        return float(np.sum(self._wflat * (a.real**2 + a.imag**2)))

    def norm(self, a) -> float:
        return float(np.sqrt(self.norm_sq(a)))

    # columns: array (n_nodes, ncomp, k)
    def _flat(self, cols):
        return cols.reshape(self.size * self.ncomp, -1)

    def gram(self, cols) -> np.ndarray:
        c = self._flat(cols)
        g = c.conj().T @ (self._wflat[:, None] * c)
        return 0.5 * (g + g.conj().T)

    def adjoint(self, cols, w) -> np.ndarray:
        return self._flat(cols).conj().T @ (self._wflat * np.ravel(w))

    def apply(self, cols, v):
        return (self._flat(cols) @ v).reshape(self.size, self.ncomp)

    def column(self, cols, i):
        return cols[:, :, i]

    def ncols(self, cols) -> int:
        return cols.shape[-1]


# --------------------------------------------------------------------------
# analytic Gaussian sums
# --------------------------------------------------------------------------

def _pad(p: np.ndarray, deg: int) -> np.ndarray:
    if p.shape[1] >= deg + 1:
        return p
    out = np.zeros((p.shape[0], deg + 1), dtype=complex)
    out[:, : p.shape[1]] = p
    return out


@dataclass
class GTerms:
    """Sum of terms ``poly_t(x) * exp(-beta x^2 - kappa_t x)``.

    ``poly`` has shape ``(T, D)`` with coefficients in ascending powers.
    """

    poly: np.ndarray
    kappa: np.ndarray
    beta: float = 0.5

    def __post_init__(self):
        self.poly = np.atleast_2d(np.asarray(self.poly, dtype=complex))
        self.kappa = np.atleast_1d(np.asarray(self.kappa, dtype=complex))
        if self.poly.shape[0] != self.kappa.shape[0]:
            raise ValueError("one polynomial per Gaussian term required")

    @property
    def nterms(self) -> int:
        return self.kappa.shape[0]

    @property
    def degree(self) -> int:
        return self.poly.shape[1] - 1

    def evaluate_terms(self, x: np.ndarray) -> np.ndarray:
        """Values of each term separately, shape ``(len(x), T)``."""
        x = np.asarray(x, dtype=float)
        expo = -self.beta * x[:, None] ** 2 - x[:, None] * self.kappa[None, :]
        if np.any(expo.real > 700.0):
            bad = int(np.argmax(np.max(expo.real, axis=0)))
            raise OverflowError(f"Gaussian term {bad} overflows on the evaluation grid")
        pv = np.zeros((x.size, self.nterms), dtype=complex)
        for j in range(self.poly.shape[1] - 1, -1, -1):
            pv = pv * x[:, None] + self.poly[None, :, j]
        return pv * np.exp(expo)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.sum(self.evaluate_terms(x), axis=1)

    def __add__(self, other: "GTerms") -> "GTerms":
        deg = max(self.degree, other.degree)
        return GTerms(
            np.vstack([_pad(self.poly, deg), _pad(other.poly, deg)]),
            np.concatenate([self.kappa, other.kappa]),
            self.beta,
        )

    def __neg__(self) -> "GTerms":
        return GTerms(-self.poly, self.kappa, self.beta)

    def __sub__(self, other: "GTerms") -> "GTerms":
        return self + (-other)

    def scale(self, s) -> "GTerms":
        """Multiply by a scalar, or termwise by an array of length ``T``."""
        s = np.asarray(s)
        return GTerms(self.poly * (s[:, None] if s.ndim else s), self.kappa, self.beta)

    def __mul__(self, s) -> "GTerms":
        return self.scale(s)

    __rmul__ = __mul__

    def mul_poly(self, coeffs) -> "GTerms":
        """Multiply every term by the polynomial with ascending ``coeffs``."""
        c = np.asarray(coeffs, dtype=complex)
        out = np.zeros((self.nterms, self.poly.shape[1] + c.size - 1), dtype=complex)
        for j, cj in enumerate(c):
            if cj != 0:
                out[:, j : j + self.poly.shape[1]] += cj * self.poly
        return GTerms(out, self.kappa, self.beta)

    def dx(self) -> "GTerms":
        # d/dx [p e^{-b x^2 - k x}] = (p' - (2 b x + k) p) e^{...}
        p = self.poly
        out = np.zeros((self.nterms, p.shape[1] + 1), dtype=complex)
        out[:, : p.shape[1] - 1] += p[:, 1:] * np.arange(1, p.shape[1])
        out[:, : p.shape[1]] -= self.kappa[:, None] * p
        out[:, 1:] -= 2.0 * self.beta * p
        return GTerms(out, self.kappa, self.beta)

    def d2(self) -> "GTerms":
        return self.dx().dx()

    def combined(self) -> "GTerms":
        """Merge terms sharing the same ``kappa`` by adding their polynomials.

        Differences of states built from the same exponents then cancel
        coefficientwise instead of inside the Gram quadratic form.
        """
        if self.nterms < 2:
            return self
        uniq, inv = np.unique(self.kappa, return_inverse=True)
        if uniq.size == self.nterms:
            return self
        poly = np.zeros((uniq.size, self.poly.shape[1]), dtype=complex)
        np.add.at(poly, inv.ravel(), self.poly)
        return GTerms(poly, uniq, self.beta)


def gaussian_moments(lam: np.ndarray, nmax: int, beta: float = 0.5) -> np.ndarray:
    """Moments ``int x^n exp(-2 beta x^2 - lam x) dx`` for ``n = 0..nmax``.

    Returns an array with a trailing axis of length ``nmax + 1``.
    """
    return kernels.gaussian_moments(np.asarray(lam, dtype=complex), int(nmax), float(beta))


class GaussianSpace:
    """``L^2(R)`` on sums of fixed-width Gaussians with polynomial prefactors."""

    kind = "analytic_gaussian"

    def __init__(self, beta: float = 0.5):
        if beta <= 0:
            raise ValueError("Gaussian width parameter must be positive")
        self.beta = float(beta)

    def embed(self, state):
        if not isinstance(state, GTerms):
            raise TypeError("analytic Gaussian space only holds Gaussian-term states")
        if state.beta != self.beta:
            raise ValueError("state has a different Gaussian width than the space")
        return state

    def embed_columns(self, cols):
        return self.embed(cols)

    def zeros(self, dtype=complex):
        return GTerms(np.zeros((0, 1)), np.zeros(0), self.beta)

    def pairwise(self, a: GTerms, b: GTerms) -> np.ndarray:
        """Matrix of term inner products ``<a_s, b_t>`` (conjugate-linear in ``a``)."""
        if a.nterms == 0 or b.nterms == 0:
            return np.zeros((a.nterms, b.nterms), dtype=complex)
        return kernels.pairwise_inner(a.poly, a.kappa, b.poly, b.kappa, self.beta)

    def inner(self, a: GTerms, b: GTerms) -> complex:
        return complex(np.sum(self.pairwise(a, b)))

    def norm_sq(self, a: GTerms) -> float:
        a = a.combined()
        return float(np.real(self.inner(a, a)))

    def norm(self, a: GTerms) -> float:
        v = self.norm_sq(a)
        return float(np.sqrt(max(v, 0.0)))

    # columns: GTerms with exactly one term per column
    def gram(self, cols: GTerms) -> np.ndarray:
        g = self.pairwise(cols, cols)
        return 0.5 * (g + g.conj().T)

    def adjoint(self, cols: GTerms, w: GTerms) -> np.ndarray:
        return self.pairwise(cols, w).sum(axis=1)

    def apply(self, cols: GTerms, v) -> GTerms:
        return cols.scale(np.asarray(v, dtype=complex))

    def column(self, cols: GTerms, i: int) -> GTerms:
        return GTerms(cols.poly[i : i + 1], cols.kappa[i : i + 1], cols.beta)

    def ncols(self, cols: GTerms) -> int:
        return cols.nterms
