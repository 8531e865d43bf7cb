# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mass-action kernels and Dormand-Prince loop.

Mirrors the numpy fallback (kernels.py) and the Python stepper
(integrate.py) step for step; tests compare the two.
"""

from libc.math cimport fabs, fmax, fmin, pow, floor, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _flux(const double[::1] x, double kj, const int[::1] ptr,
                         const int[::1] idx, const int[::1] ex, Py_ssize_t j) noexcept nogil:
    cdef double f = kj
    cdef double xs
    cdef int p, e
    for p in range(ptr[j], ptr[j + 1]):
        xs = x[idx[p]]
        e = ex[p]
        if e == 1:
            f *= xs
        else:
            while e > 0:
                f *= xs
                e -= 1
    return f


cdef void _rhs(const double[::1] x, const double[::1] k, const int[::1] rptr,
               const int[::1] ridx, const int[::1] rexp, const int[::1] cptr,
               const int[::1] cidx, const double[::1] ccoef, double[::1] out) noexcept nogil:
    cdef Py_ssize_t j, p, m = rptr.shape[0] - 1
    cdef double f
    out[:] = 0.0
    for j in range(m):
        f = _flux(x, k[j], rptr, ridx, rexp, j)
        if f != 0.0:
            for p in range(cptr[j], cptr[j + 1]):
                out[cidx[p]] += ccoef[p] * f


def fluxes(const double[::1] x, const double[::1] k, const int[::1] react_ptr,
           const int[::1] react_idx, const int[::1] react_exp, double[::1] out):
    cdef Py_ssize_t j, m = react_ptr.shape[0] - 1
    with nogil:
        for j in range(m):
            out[j] = _flux(x, k[j], react_ptr, react_idx, react_exp, j)


def rhs(const double[::1] x, const double[::1] k, const int[::1] react_ptr,
        const int[::1] react_idx, const int[::1] react_exp, const int[::1] change_ptr,
        const int[::1] change_idx, const double[::1] change_coef, double[::1] out):
    with nogil:
        _rhs(x, k, react_ptr, react_idx, react_exp, change_ptr, change_idx, change_coef, out)


# Dormand-Prince 5(4) tableau
cdef double[7][7] _A
cdef double[7] _B
cdef double[7] _E

_A[1][:1] = [1 / 5.]
_A[2][:2] = [3 / 40., 9 / 40.]
_A[3][:3] = [44 / 45., -56 / 15., 32 / 9.]
_A[4][:4] = [19372 / 6561., -25360 / 2187., 64448 / 6561., -212 / 729.]
_A[5][:5] = [9017 / 3168., -355 / 33., 46732 / 5247., 49 / 176., -5103 / 18656.]
_A[6][:6] = [35 / 384., 0., 500 / 1113., 125 / 192., -2187 / 6784., 11 / 84.]
_B[:] = [35 / 384., 0., 500 / 1113., 125 / 192., -2187 / 6784., 11 / 84., 0.]
_E[:] = [35 / 384. - 5179 / 57600., 0., 500 / 1113. - 7571 / 16695., 125 / 192. - 393 / 640.,
         -2187 / 6784. + 92097 / 339200., 11 / 84. - 187 / 2100., -1 / 40.]

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 5.0


def dopri5(double[::1] y, const double[::1] k, const int[::1] rptr, const int[::1] ridx,
           const int[::1] rexp, const int[::1] cptr, const int[::1] cidx,
           const double[::1] ccoef, const unsigned char[::1] free, const double[::1] scale,
           double t_max, double rtol, double atol, double conv_tol, double checkpoint_dt,
           double h, double h_min_rel, long max_steps):
    """Integrate in place from t=0; same control logic as integrate.dopri5.

    ``conv_tol <= 0`` disables the convergence stop; ``checkpoint_dt < 0``
    disables checkpoints and ``checkpoint_dt == 0`` records every step. Returns a dict with the final time, flags, stats,
    recorded checkpoints and, on failure, the offending component indices.
    """
    cdef Py_ssize_t n = y.shape[0]
    cdef double[:, ::1] K = np.zeros((7, n))
    cdef double[::1] ytmp = np.empty(n)
    cdef double[::1] ynew = np.empty(n)
    cdef double[::1] errv = np.empty(n)
    cdef double t = 0.0, err, norm, v, sc, factor, next_ckpt, acc
    cdef Py_ssize_t i, s, r
    cdef long steps = 0, rejected = 0, neg_rejected = 0, evals = 0
    cdef bint negative, converged = False, failed = False
    times = [0.0]
    states = [np.array(y)]

    _rhs(y, k, rptr, ridx, rexp, cptr, cidx, ccoef, K[0])
    evals += 1
    norm = 0.0
    for i in range(n):
        if free[i]:
            norm = fmax(norm, fabs(K[0, i]) / scale[i])
        else:
            K[0, i] = 0.0
    next_ckpt = checkpoint_dt if checkpoint_dt >= 0 else INFINITY
    if conv_tol > 0 and norm < conv_tol:
        converged = True

    while not converged and t < t_max and steps < max_steps:
        h = fmin(h, t_max - t)
        for s in range(1, 7):
            for i in range(n):
                acc = 0.0
                for r in range(s):
                    acc += _A[s][r] * K[r, i]
                ytmp[i] = y[i] + h * acc
            _rhs(ytmp, k, rptr, ridx, rexp, cptr, cidx, ccoef, K[s])
            for i in range(n):
                if not free[i]:
                    K[s, i] = 0.0
        evals += 6
        err = 0.0
        negative = False
        for i in range(n):
            acc = 0.0
            v = 0.0
            for r in range(7):
                acc += _B[r] * K[r, i]
                v += _E[r] * K[r, i]
            ynew[i] = y[i] + h * acc
            errv[i] = h * v
            if ynew[i] < 0:
                negative = True
            if free[i]:
                sc = atol + rtol * fmax(fabs(y[i]), fabs(ynew[i]))
                err = fmax(err, fabs(errv[i]) / sc)
        if err <= 1.0 and not negative:
            t += h
            y[:] = ynew
            K[0, :] = K[6, :]
            steps += 1
            norm = 0.0
            for i in range(n):
                if free[i]:
                    norm = fmax(norm, fabs(K[0, i]) / scale[i])
            if t >= next_ckpt:
                times.append(t)
                states.append(np.array(y))
                if checkpoint_dt > 0:
                    next_ckpt = (floor(t / checkpoint_dt) + 1) * checkpoint_dt
            if err == 0:
                factor = MAX_FACTOR
            else:
                factor = fmin(MAX_FACTOR, SAFETY * pow(err, -0.2))
            h *= factor
            if conv_tol > 0 and norm < conv_tol:
                converged = True
                break
        else:
            rejected += 1
            if negative:
                neg_rejected += 1
                h *= 0.5
            else:
                h *= fmax(MIN_FACTOR, SAFETY * pow(err, -0.2))
        if h < h_min_rel * fmax(1.0, t):
            failed = True
            break

    worst = []
    if failed:
        if negative:
            worst = [i for i in range(n) if ynew[i] < 0]
        else:
            ratio = np.abs(np.asarray(errv)) / (atol + rtol * np.maximum(np.abs(np.asarray(y)), np.abs(np.asarray(ynew))))
            worst = list(np.argsort(-ratio)[:3])
    if times[len(times) - 1] != t:
        times.append(t)
        states.append(np.array(y))
    return dict(
        t=t, h=h, converged=converged, failed=failed, norm=norm, worst=worst,
        times=times, states=states,
        stats=dict(steps=steps, rejected=rejected, negative_rejected=neg_rejected, rhs_evals=evals),
    )
