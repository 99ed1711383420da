"""Linear parametrizations ``Phi(q) = sum_j q_j phi_j``."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la

from .base import JacobianMap, NoTangentLift, ParametricModel
from .spaces import QuadratureSpace


class LinearModel(ParametricModel):
    """Fixed basis; optionally closed under the Laplacian.

    ``laplacian`` is the matrix ``L`` with ``Laplacian phi_j = sum_i L_ij phi_i``.
    """

    def __init__(self, space, basis, laplacian: np.ndarray | None = None, is_complex: bool | None = None):
        self.space = space
        self.basis = space.embed_columns(basis)
        self.nparams = space.ncols(self.basis)
        if is_complex is None:
            is_complex = np.iscomplexobj(self.basis)
        self.is_complex = bool(is_complex)
        self.laplacian = None if laplacian is None else np.asarray(laplacian)
        self._jac = JacobianMap(space, self.basis)

    def eval(self, q):
        q = self.check_params(q)
        return self.space.apply(self.basis, q)

    def jacobian(self, q) -> JacobianMap:
        self.check_params(q)
        return self._jac

    def laplacian_lift(self, q):
        if self.laplacian is None:
            raise NoTangentLift("basis is not closed under the Laplacian")
        return self.laplacian @ q

    def exact_free_flow(self, q, h, kinetic):
        if self.laplacian is None:
            return None
        L = self.laplacian
        if np.count_nonzero(L - np.diag(np.diagonal(L))) == 0:
            return np.exp(1j * kinetic * h * np.diagonal(L)) * q
        return la.expm(1j * kinetic * h * L) @ q


def fourier_model(n_grid: int = 128, modes: int = 8, length: float = 2 * np.pi) -> LinearModel:
    """Orthonormal Fourier modes ``exp(i k x)/sqrt(length)``, ``|k| <= modes``, on a periodic grid."""
    space = QuadratureSpace.uniform_periodic(0.0, length, n_grid)
    ks = 2 * np.pi / length * np.arange(-modes, modes + 1)
    x = space.nodes[:, 0]
    basis = np.exp(1j * x[:, None] * ks[None, :]) / np.sqrt(length)
    model = LinearModel(space, basis[:, None, :], np.diag(-(ks**2)), is_complex=True)
    model.wavenumbers = ks
    return model
