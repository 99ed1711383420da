"""Small fully connected sigmoid network evaluated at quadrature nodes."""
from __future__ import annotations

import numpy as np

from .. import kernels
from .base import JacobianMap, ParametricModel
from .spaces import QuadratureSpace

# 2 -> 4 -> 4 -> 4 -> 2: (8+4) + (16+4) + (16+4) + (8+2) = 62 parameters
LV_SIZES = (2, 4, 4, 4, 2)


def count_params(sizes) -> int:
    return sum(nout * nin + nout for nin, nout in zip(sizes[:-1], sizes[1:]))


class MLPModel(ParametricModel):
    """Sigmoid hidden layers, linear output layer.

    Parameters are flattened layer by layer, each layer's weight matrix
    (row-major, ``(n_out, n_in)``) before its bias vector.
    """

    is_complex = False

    def __init__(self, space: QuadratureSpace, sizes=LV_SIZES):
        self.sizes = tuple(int(s) for s in sizes)
        if space.nodes.shape[1] != self.sizes[0] or space.ncomp != self.sizes[-1]:
            raise ValueError("network input/output sizes must match the quadrature space")
        self.space = space
        self.nparams = count_params(self.sizes)

    def init_params(self, seed: int = 0, scale: float = 0.5) -> np.ndarray:
        return np.random.default_rng(seed).uniform(-scale, scale, self.nparams)

    def _check_output(self, q, out):
        if not np.all(np.isfinite(out)):
            bad = int(np.argmax(np.abs(q)))
            raise FloatingPointError(f"network output overflows; largest parameter is index {bad}")

    def eval(self, q):
        q = self.check_params(q)
        out = kernels.mlp_forward(q, self.sizes, self.space.nodes)
        self._check_output(q, out)
        return out

    def eval_and_jacobian(self, q):
        q = self.check_params(q)
        out, jac = kernels.mlp_forward_jacobian(q, self.sizes, self.space.nodes)
        self._check_output(q, out)
        return out, JacobianMap(self.space, jac)

    def jacobian(self, q) -> JacobianMap:
        return self.eval_and_jacobian(q)[1]
