"""Dormand-Prince 5(4) integration for autonomous nonnegative systems.

Accepted states are never clipped: a step whose endpoint has a negative
entry is rejected and retried with half the step size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
B_LOW = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B - B_LOW

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 5.0


class IntegrationError(RuntimeError):
    """Step size underflow; ``species`` names the components that forced it."""

    def __init__(self, message, species=()):
        super().__init__(message)
        self.species = list(species)


@dataclass
class IntegrationResult:
    times: np.ndarray
    states: np.ndarray
    converged: bool
    final_rhs_norm: float
    t_final: float
    y_final: np.ndarray
    stats: dict = field(default_factory=dict)


def _initial_step(f, y0, f0, rtol, atol, free):
    sc = atol + rtol * np.abs(y0[free])
    d0 = np.max(np.abs(y0[free]) / sc) if free.any() else 0.0
    d1 = np.max(np.abs(f0[free]) / sc) if free.any() else 0.0
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    d2 = np.max(np.abs(f(y1) - f0)[free] / sc) / h0 if free.any() else 0.0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(
    f,
    y0,
    t_max: float,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    free=None,
    rhs_scale=None,
    convergence_tol: float | None = None,
    checkpoint_dt: float | None = None,
    names=None,
    h_min_rel: float = 1e-13,
    max_steps: int = 10_000_000,
) -> IntegrationResult:
    """Integrate ``y' = f(y)`` from t=0.

    Components outside ``free`` get a zero derivative and stay bit-identical.
    Integration stops once ``max |f(y)| / rhs_scale`` over free components
    drops below ``convergence_tol`` or at ``t_max``. The first accepted state
    at or after each multiple of ``checkpoint_dt`` is recorded, together with
    the initial and final states; ``checkpoint_dt=0`` records every accepted
    step and ``None`` only the endpoints.
    """
    y = np.array(y0, dtype=float)
    n = y.size
    free = np.ones(n, bool) if free is None else np.asarray(free, bool)
    scale = np.ones(n) if rhs_scale is None else np.asarray(rhs_scale, float)
    if np.any(y < 0):
        raise ValueError("initial state has negative entries")
    names = names if names is not None else [str(i) for i in range(n)]

    def rhs(v):
        d = f(v)
        d[~free] = 0.0
        return d

    def resid(d):
        return float(np.max(np.abs(d[free]) / scale[free])) if free.any() else 0.0

    k = np.empty((7, n))
    k[0] = rhs(y)
    t = 0.0
    times, states = [0.0], [y.copy()]
    next_ckpt = np.inf if checkpoint_dt is None else checkpoint_dt
    norm = resid(k[0])
    stats = dict(steps=0, rejected=0, negative_rejected=0, rhs_evals=1)
    if convergence_tol is not None and norm < convergence_tol:
        return IntegrationResult(np.array(times), np.array(states), True, norm, t, y, stats)

    h = _initial_step(rhs, y, k[0], rtol, atol, free)
    stats["rhs_evals"] += 1
    converged = False
    while t < t_max:
        if stats["steps"] >= max_steps:
            break
        h = min(h, t_max - t)
        for s in range(1, 7):
            k[s] = rhs(y + h * (np.asarray(A[s]) @ k[:s]))
        stats["rhs_evals"] += 6
        y_new = y + h * (B @ k)
        err_vec = h * (E @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec[free]) / sc[free])) if free.any() else 0.0
        negative = bool(np.any(y_new < 0))
        if err <= 1.0 and not negative:
            t += h
            y = y_new
            k[0] = k[6]  # first-same-as-last
            stats["steps"] += 1
            norm = resid(k[0])
            if t >= next_ckpt:
                times.append(t)
                states.append(y.copy())
                if checkpoint_dt > 0:
                    next_ckpt = (np.floor(t / checkpoint_dt) + 1) * checkpoint_dt
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h *= factor
            if convergence_tol is not None and norm < convergence_tol:
                converged = True
                break
        else:
            stats["rejected"] += 1
            if negative:
                stats["negative_rejected"] += 1
                h *= 0.5
            else:
                h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
        if h < h_min_rel * max(1.0, t):
            if negative:
                worst = np.flatnonzero(y_new < 0)
            else:
                worst = np.argsort(-np.abs(err_vec) / sc)[:3]
            raise IntegrationError(
                f"step size underflow at t={t:.6g} (h={h:.3g})",
                [names[i] for i in worst],
            )
    if times[-1] != t:
        times.append(t)
        states.append(y.copy())
    log.debug("dopri5 finished t=%g converged=%s stats=%s", t, converged, stats)
    return IntegrationResult(np.array(times), np.array(states), converged, norm, t, y, stats)


def integrate_network(
    compiled,
    k,
    y0,
    t_max: float,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    free=None,
    rhs_scale=None,
    convergence_tol: float | None = None,
    checkpoint_dt: float | None = None,
    names=None,
    h_min_rel: float = 1e-13,
    max_steps: int = 10_000_000,
) -> IntegrationResult:
    """:func:`dopri5` on a compiled mass-action network.

    Uses the compiled stepper when the network's backend is ``"cython"``;
    both paths share the same step-control rules.
    """
    from . import kernels

    k = np.ascontiguousarray(k, dtype=float)
    if compiled.backend != "cython":
        return dopri5(
            lambda v: compiled.rhs(v, k), y0, t_max, rtol, atol, free, rhs_scale,
            convergence_tol, checkpoint_dt, names, h_min_rel, max_steps,
        )
    y = np.array(y0, dtype=float)
    n = y.size
    if np.any(y < 0):
        raise ValueError("initial state has negative entries")
    free = np.ones(n, bool) if free is None else np.asarray(free, bool)
    scale = np.ones(n) if rhs_scale is None else np.ascontiguousarray(rhs_scale, dtype=float)
    names = names if names is not None else [str(i) for i in range(n)]

    def rhs(v):
        d = compiled.rhs(v, k)
        d[~free] = 0.0
        return d

    h0 = _initial_step(rhs, y, rhs(y), rtol, atol, free)
    out = kernels._ckernels.dopri5(
        y, k, compiled.react_ptr, compiled.react_idx, compiled.react_exp,
        compiled.change_ptr, compiled.change_idx, compiled.change_coef,
        free.astype(np.uint8), scale, float(t_max), rtol, atol,
        convergence_tol if convergence_tol is not None else -1.0,
        -1.0 if checkpoint_dt is None else float(checkpoint_dt), h0, h_min_rel, max_steps,
    )
    out["stats"]["rhs_evals"] += 2
    if out["failed"]:
        raise IntegrationError(
            f"step size underflow at t={out['t']:.6g} (h={out['h']:.3g})",
            [names[i] for i in out["worst"]],
        )
    return IntegrationResult(
        np.array(out["times"]), np.array(out["states"]), out["converged"],
        out["norm"], out["t"], y, out["stats"],
    )
