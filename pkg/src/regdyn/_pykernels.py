"""Pure NumPy implementations of the numerical kernels.

These are the reference versions; the compiled extension ``_ckernels`` must
agree with them to roundoff.
"""
from __future__ import annotations

import numpy as np

# exp() argument beyond which double precision overflows
EXP_LIMIT = 700.0


def gaussian_moments(lam: np.ndarray, nmax: int, beta: float) -> np.ndarray:
    """``int x^n exp(-2 beta x^2 - lam x) dx`` for ``n = 0..nmax``.

    Completing the square gives ``I_0 = sqrt(pi/(2 beta)) exp(lam^2/(8 beta))``
    with centre ``m = -lam/(4 beta)``; integration by parts then yields
    ``I_{n+1} = m I_n + n/(4 beta) I_{n-1}``.
    """
    lam = np.asarray(lam, dtype=complex)
    expo = lam * lam / (8.0 * beta)
    if np.any(expo.real > EXP_LIMIT):
        raise OverflowError("Gaussian moment overflows; a linear exponent coefficient is too large")
    out = np.empty(lam.shape + (nmax + 1,), dtype=complex)
    out[..., 0] = np.sqrt(np.pi / (2.0 * beta)) * np.exp(expo)
    if nmax >= 1:
        m = -lam / (4.0 * beta)
        out[..., 1] = m * out[..., 0]
        for n in range(1, nmax):
            out[..., n + 1] = m * out[..., n] + (n / (4.0 * beta)) * out[..., n - 1]
    return out


def pairwise_inner(pa: np.ndarray, ka: np.ndarray, pb: np.ndarray, kb: np.ndarray, beta: float) -> np.ndarray:
    """Inner products of polynomial-times-Gaussian terms, shape ``(Ta, Tb)``."""
    lam = np.conj(ka)[:, None] + kb[None, :]
    da, db = pa.shape[1], pb.shape[1]
    mom = gaussian_moments(lam, da + db - 2, beta)
    cpa = np.conj(pa)
    out = np.zeros(lam.shape, dtype=complex)
    for i in range(da):
        if not np.any(cpa[:, i]):
            continue
        for j in range(db):
            out += cpa[:, i][:, None] * pb[:, j][None, :] * mom[:, :, i + j]
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # branch form keeps exp() arguments nonpositive
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_forward(theta: np.ndarray, sizes: tuple[int, ...], X: np.ndarray) -> np.ndarray:
    a = X
    off = 0
    nl = len(sizes) - 1
    for layer in range(nl):
        nin, nout = sizes[layer], sizes[layer + 1]
        W = theta[off : off + nout * nin].reshape(nout, nin)
        off += nout * nin
        b = theta[off : off + nout]
        off += nout
        z = a @ W.T + b
        a = _sigmoid(z) if layer < nl - 1 else z
    return a


def mlp_forward_jacobian(theta: np.ndarray, sizes: tuple[int, ...], X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Network outputs ``(N, n_out)`` and forward-mode parameter Jacobian ``(N, n_out, P)``."""
    N = X.shape[0]
    P = theta.size
    a = X
    Ta = np.zeros((N, sizes[0], P))
    off = 0
    nl = len(sizes) - 1
    for layer in range(nl):
        nin, nout = sizes[layer], sizes[layer + 1]
        iw = off
        W = theta[off : off + nout * nin].reshape(nout, nin)
        off += nout * nin
        ib = off
        b = theta[off : off + nout]
        off += nout
        z = a @ W.T + b
        Tz = np.einsum("oi,nip->nop", W, Ta)
        for o in range(nout):
            Tz[:, o, iw + o * nin : iw + (o + 1) * nin] += a
            Tz[:, o, ib + o] += 1.0
        if layer < nl - 1:
            s = _sigmoid(z)
            Ta = (s * (1.0 - s))[:, :, None] * Tz
            a = s
        else:
            Ta = Tz
            a = z
    return a, Ta
