# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP kernels; same signatures and results as ``_pykernels``.

The Jacobian is assembled node by node with one backward sweep per output
component, which touches each parameter once per sweep.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def _layout(sizes, Py_ssize_t nparams):
    sizes = tuple(int(s) for s in sizes)
    nl = len(sizes) - 1
    w_off = np.empty(nl, dtype=np.intp)
    b_off = np.empty(nl, dtype=np.intp)
    a_off = np.empty(nl + 1, dtype=np.intp)
    off = 0
    aoff = 0
    for l in range(nl):
        w_off[l] = off
        off += sizes[l] * sizes[l + 1]
        b_off[l] = off
        off += sizes[l + 1]
    for l in range(nl + 1):
        a_off[l] = aoff
        aoff += sizes[l]
    if off != nparams:
        raise ValueError(f"parameter vector has length {nparams}, layer sizes need {off}")
    return np.asarray(sizes, dtype=np.intp), w_off, b_off, a_off, aoff


cdef void _forward_node(const double[::1] theta, const Py_ssize_t[::1] sz, const Py_ssize_t[::1] w_off,
                        const Py_ssize_t[::1] b_off, const Py_ssize_t[::1] a_off, Py_ssize_t nl,
                        double[::1] act) noexcept nogil:
    # act holds the activations of every layer back to back; the input is already in place
    cdef Py_ssize_t l, o, i, nin, nout
    cdef double z
    for l in range(nl):
        nin = sz[l]
        nout = sz[l + 1]
        for o in range(nout):
            z = theta[b_off[l] + o]
            for i in range(nin):
                z += theta[w_off[l] + o * nin + i] * act[a_off[l] + i]
            act[a_off[l + 1] + o] = _sigmoid(z) if l < nl - 1 else z


def mlp_forward(theta, sizes, X):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    sz_a, w_a, b_a, a_a, total = _layout(sizes, th.shape[0])
    cdef const Py_ssize_t[::1] sz = sz_a
    cdef const Py_ssize_t[::1] w_off = w_a
    cdef const Py_ssize_t[::1] b_off = b_a
    cdef const Py_ssize_t[::1] a_off = a_a
    cdef Py_ssize_t nl = sz.shape[0] - 1
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], nin = sz[0], nout = sz[nl]
    if x.shape[1] != nin:
        raise ValueError("input dimension does not match the first layer")
    out_a = np.empty((N, nout))
    cdef double[:, ::1] out = out_a
    cdef double[::1] act = np.empty(total)
    cdef Py_ssize_t n, i
    with nogil:
        for n in range(N):
            for i in range(nin):
                act[i] = x[n, i]
            _forward_node(th, sz, w_off, b_off, a_off, nl, act)
            for i in range(nout):
                out[n, i] = act[a_off[nl] + i]
    return out_a


def mlp_forward_jacobian(theta, sizes, X):
    """Network outputs ``(N, n_out)`` and parameter Jacobian ``(N, n_out, P)``."""
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    sz_a, w_a, b_a, a_a, total = _layout(sizes, th.shape[0])
    cdef const Py_ssize_t[::1] sz = sz_a
    cdef const Py_ssize_t[::1] w_off = w_a
    cdef const Py_ssize_t[::1] b_off = b_a
    cdef const Py_ssize_t[::1] a_off = a_a
    cdef Py_ssize_t nl = sz.shape[0] - 1
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], nin0 = sz[0], nout_last = sz[nl], P = th.shape[0]
    if x.shape[1] != nin0:
        raise ValueError("input dimension does not match the first layer")
    out_a = np.empty((N, nout_last))
    jac_a = np.zeros((N, nout_last, P))
    cdef double[:, ::1] out = out_a
    cdef double[:, :, ::1] jac = jac_a
    cdef double[::1] act = np.empty(total)
    cdef double[::1] delta = np.empty(total)
    cdef Py_ssize_t n, c, l, o, i, nin, nout
    cdef double d, s, acc
    with nogil:
        for n in range(N):
            for i in range(nin0):
                act[i] = x[n, i]
            _forward_node(th, sz, w_off, b_off, a_off, nl, act)
            for i in range(nout_last):
                out[n, i] = act[a_off[nl] + i]
            for c in range(nout_last):
                # sensitivity of output c to the pre-activations of the last layer
                for o in range(nout_last):
                    delta[a_off[nl] + o] = 1.0 if o == c else 0.0
                l = nl - 1
                while l >= 0:
                    nin = sz[l]
                    nout = sz[l + 1]
                    for o in range(nout):
                        d = delta[a_off[l + 1] + o]
                        if d != 0.0:
                            jac[n, c, b_off[l] + o] = d
                            for i in range(nin):
                                jac[n, c, w_off[l] + o * nin + i] = d * act[a_off[l] + i]
                    if l > 0:
                        # back through the sigmoid of layer l - 1
                        for i in range(nin):
                            acc = 0.0
                            for o in range(nout):
                                acc += th[w_off[l] + o * nin + i] * delta[a_off[l + 1] + o]
                            s = act[a_off[l] + i]
                            delta[a_off[l] + i] = acc * s * (1.0 - s)
                    l -= 1
    return out_a, jac_a
