"""Models given by plain callables; mostly for small test problems."""
from __future__ import annotations

import numpy as np

from .base import JacobianMap, ParametricModel
from .linear import LinearModel
from .spaces import QuadratureSpace


class CallableModel(ParametricModel):
    """``Phi`` and ``Phi'`` supplied as functions returning node values.

    ``jac_fn(q)`` returns the Jacobian as an array ``(n_nodes, ncomp, nparams)``.
    """

    def __init__(self, space: QuadratureSpace, nparams: int, eval_fn, jac_fn, is_complex: bool = False):
        self.space = space
        self.nparams = int(nparams)
        self.is_complex = bool(is_complex)
        self._eval = eval_fn
        self._jac = jac_fn

    def eval(self, q):
        return self.space.embed(self._eval(self.check_params(q)))

    def jacobian(self, q) -> JacobianMap:
        cols = np.asarray(self._jac(self.check_params(q)))
        return JacobianMap(self.space, cols.reshape(self.space.size, self.space.ncomp, self.nparams))


def identity_model(n: int = 1, is_complex: bool = False) -> LinearModel:
    """``Phi(q) = q`` on ``R^n`` (or ``C^n``)."""
    basis = np.eye(n, dtype=complex if is_complex else float)[:, None, :]
    return LinearModel(QuadratureSpace.euclidean(n), basis, is_complex=is_complex)


def half_square_model() -> CallableModel:
    """Scalar ``Phi(q) = q^2 / 2``; ``Phi'(0) = 0`` makes the velocity degenerate at the origin."""
    return CallableModel(QuadratureSpace.euclidean(1), 1, lambda q: 0.5 * q**2, lambda q: q.reshape(1, 1, 1))
