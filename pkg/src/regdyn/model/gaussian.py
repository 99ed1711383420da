"""Frozen-width complex Gaussian sums.

``Phi(q)(x) = sum_m c_m exp(-beta x^2 - kappa_m x)`` with complex parameters
``q = (c_1..c_M, kappa_1..kappa_M)``.  The map is holomorphic in ``q``, so
the Jacobian is complex linear with columns

* ``d/dc_m     = exp(-beta x^2 - kappa_m x)``
* ``d/dkappa_m = -x c_m exp(-beta x^2 - kappa_m x)``.

The tangent space is spanned by ``g_m`` and ``x g_m``.  The Laplacian of a
term produces ``x^2 g_m``, which lies outside this span, so the Laplacian lift
is a least-squares lift with a nonzero residual.
"""
from __future__ import annotations

import numpy as np

from .base import JacobianMap, ParametricModel
from .spaces import GaussianSpace, GTerms
from .._pykernels import EXP_LIMIT


class GaussianSumModel(ParametricModel):
    is_complex = True

    def __init__(self, M: int, beta: float = 0.5, space=None):
        self.M = int(M)
        self.beta = float(beta)
        self.nparams = 2 * self.M
        self.space = GaussianSpace(beta) if space is None else space

    def split(self, q):
        return q[: self.M], q[self.M :]

    def pack(self, c, kappa):
        return np.concatenate([np.asarray(c, dtype=complex), np.asarray(kappa, dtype=complex)])

    def check_params(self, q):
        q = super().check_params(q)
        kappa = q[self.M :]
        # largest moment exponent is (Re kappa)^2 / (2 beta)
        expo = kappa.real**2 / (2.0 * self.beta)
        if np.any(expo > EXP_LIMIT):
            bad = self.M + int(np.argmax(expo))
            raise OverflowError(f"parameter {bad} (kappa_{bad - self.M}) overflows the Gaussian integrals")
        return q

    def terms(self, q) -> GTerms:
        q = self.check_params(q)
        c, kappa = self.split(q)
        return GTerms(c[:, None], kappa, self.beta)

    def eval(self, q):
        return self.space.embed(self.terms(q))

    def jacobian_terms(self, q) -> GTerms:
        q = self.check_params(q)
        c, kappa = self.split(q)
        poly = np.zeros((2 * self.M, 2), dtype=complex)
        poly[: self.M, 0] = 1.0
        poly[self.M :, 1] = -c
        return GTerms(poly, np.concatenate([kappa, kappa]), self.beta)

    def jacobian(self, q) -> JacobianMap:
        return JacobianMap(self.space, self.space.embed_columns(self.jacobian_terms(q)))

    def laplacian_state(self, q):
        return self.space.embed(self.terms(q).d2())

    def affine_lift(self, q, slope, offset):
        """Exact tangent vector for ``(offset_m + slope_m x) * c_m g_m`` termwise."""
        c, _ = self.split(self.check_params(q))
        return self.pack(np.asarray(offset) * c, -np.asarray(slope) * np.ones(self.M))

    def centers(self, q):
        """Position centres ``argmax |g_m|`` = ``-Re(kappa_m) / (2 beta)``."""
        _, kappa = self.split(q)
        return -kappa.real / (2.0 * self.beta)


def wavepacket_to_params(x0, xi0, beta: float = 0.5):
    """Rewrite ``exp(-beta (x - x0)^2 + i xi0 (x - x0))`` as ``c exp(-beta x^2 - kappa x)``."""
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    kappa = -(2.0 * beta * x0 + 1j * xi0)
    c = np.exp(-beta * x0**2 - 1j * xi0 * x0)
    return c, kappa
