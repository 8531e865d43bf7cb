"""Fixed-point residuals, flower spectra and empirical convergence rates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.csgraph import connected_components

from . import compiler
from .crn import Flower, RateAssignment, ReactionNetwork, flower_totals, is_positive
from .hmm import Hmm, check_observations

BW_TOL = 1e-6
RHS_TOL = 1e-8
RESIDUAL_FAMILIES = ("alpha_init", "alpha", "beta", "gamma", "xi", "theta", "psi")


@dataclass
class FixedPointReport:
    bw_residuals: dict
    crn_rhs_norm: float
    positive: bool
    classification: str
    boundary: list = field(default_factory=list)

    @property
    def bw_residual(self) -> float:
        return max(self.bw_residuals.values())

    def as_dict(self) -> dict:
        return dict(
            bw_residuals=dict(self.bw_residuals),
            crn_rhs_norm=self.crn_rhs_norm,
            positive=self.positive,
            classification=self.classification,
            boundary=list(self.boundary),
        )


def classify(bw_residual: float, rhs_norm: float, bw_tol: float = BW_TOL, rhs_tol: float = RHS_TOL) -> str:
    bw, crn = bw_residual < bw_tol, rhs_norm < rhs_tol
    if bw and crn:
        return "both-fixed"
    if crn:
        return "crn-only"
    if bw:
        return "bw-only"
    return "neither"


def _direction_gap(actual, predicted, empty_ok: bool = False) -> float:
    """Max-norm distance between the normalized directions of two nonnegative rows.

    A row whose predicted total vanishes has no defined direction: it scores 0
    when ``empty_ok`` (an M-step row the classical update leaves unchanged),
    otherwise 1.
    """
    a = np.asarray(actual, dtype=float).ravel()
    b = np.asarray(predicted, dtype=float).ravel()
    sa, sb = a.sum(), b.sum()
    if sb <= 0:
        return 0.0 if empty_ok else 1.0
    if sa <= 0:
        return 1.0
    return float(np.max(np.abs(a / sa - b / sb)))


def bw_residuals(hmm: Hmm, obs, layout: compiler.SpeciesLayout, x) -> dict:
    """Per-family residuals of the Baum-Welch fixed-point equations at state ``x``.

    Each equation is checked up to a per-row scale: the rows of alpha, beta,
    gamma, xi, theta and psi held in ``x`` are compared, as directions, with
    the rows predicted from the other species in ``x``. pi comes from ``hmm``.
    """
    obs = check_observations(obs, hmm.n_visible)
    x = np.asarray(x, dtype=float)
    al, be, ga, xi = x[layout.alpha], x[layout.beta], x[layout.gamma], x[layout.xi]
    th, ps, E = x[layout.theta], x[layout.psi], x[layout.E]
    th = th / np.where(th.sum(1, keepdims=True) > 0, th.sum(1, keepdims=True), 1.0)
    ps = ps / np.where(ps.sum(1, keepdims=True) > 0, ps.sum(1, keepdims=True), 1.0)
    L = len(obs)
    res = dict.fromkeys(RESIDUAL_FAMILIES, 0.0)
    res["alpha_init"] = _direction_gap(al[0], hmm.pi * ps[:, obs[0]])
    for l in range(1, L):
        res["alpha"] = max(res["alpha"], _direction_gap(al[l], (al[l - 1] @ th) * ps[:, obs[l]]))
    for l in range(L - 1):
        res["beta"] = max(res["beta"], _direction_gap(be[l], th @ (ps[:, obs[l + 1]] * be[l + 1])))
    for l in range(L):
        res["gamma"] = max(res["gamma"], _direction_gap(ga[l], al[l] * be[l]))
    for l in range(L - 1):
        pred = al[l][:, None] * th * (ps[:, obs[l + 1]] * be[l + 1])[None, :]
        res["xi"] = max(res["xi"], _direction_gap(xi[l], pred))
    counts = xi.sum(axis=0)
    for g in range(hmm.n_hidden):
        res["theta"] = max(res["theta"], _direction_gap(th[g], counts[g], empty_ok=True))
    emit = ga.T @ E
    for h in range(hmm.n_hidden):
        res["psi"] = max(res["psi"], _direction_gap(ps[h], emit[h], empty_ok=True))
    return res


def scaled_rhs_norm(net: ReactionNetwork, rates: RateAssignment, x) -> float:
    """``max |dx_i/dt| / T_i`` with ``T_i`` the flower total holding species i."""
    x = np.asarray(x, dtype=float)
    d = net.compiled.rhs(x, rates.vector(net))
    tot = flower_totals(net, x)
    tot[tot <= 0] = 1.0
    return float(np.max(np.abs(d) / tot)) if d.size else 0.0


def check_fixed_point(
    hmm: Hmm,
    obs,
    x,
    layout: compiler.SpeciesLayout | None = None,
    net: ReactionNetwork | None = None,
    rates: RateAssignment | None = None,
    h_star: int | None = None,
    bw_tol: float = BW_TOL,
    rhs_tol: float = RHS_TOL,
) -> FixedPointReport:
    """Evaluate a candidate state as a Baum-Welch and as a network fixed point."""
    obs = check_observations(obs, hmm.n_visible)
    if layout is None or net is None:
        h_star = hmm.n_hidden - 1 if h_star is None else h_star
        net, layout = compiler.compile_for(hmm, len(obs), h_star)
    rates = rates or compiler.default_rates(net)
    x = np.asarray(x, dtype=float)
    if x.shape != (layout.n_species,):
        raise ValueError(f"state has shape {x.shape}, expected ({layout.n_species},)")
    res = bw_residuals(hmm, obs, layout, x)
    rhs = scaled_rhs_norm(net, rates, x)
    members = np.concatenate([list(fl.members) for fl in net.flowers]) if net.flowers else np.empty(0, int)
    eps = 1e-6 * flower_totals(net, x)[members]
    positive, boundary = is_positive(x[members], eps, [net.names[i] for i in members])
    return FixedPointReport(res, rhs, positive, classify(max(res.values()), rhs, bw_tol, rhs_tol), boundary)


@dataclass
class MonomolecularSystem:
    """``dx/dt = A x`` with conservation rows ``W`` such that ``W A = 0``.

    ``perm`` orders the coordinates so that ``W[:, perm] = (W' I_r)``.
    """

    A: np.ndarray
    W: np.ndarray
    perm: np.ndarray
    species: tuple = ()
    strongly_connected: bool = True
    switched_off: list = field(default_factory=list)

    @property
    def r(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_matrix(cls, A, species=(), tol: float = 1e-10) -> "MonomolecularSystem":
        A = np.asarray(A, dtype=float)
        W, perm = conservation_rows(A, tol)
        n = A.shape[0]
        adj = (np.abs(A) > 0) & ~np.eye(n, dtype=bool)
        ncomp, _ = connected_components(adj, directed=True, connection="strong")
        return cls(A, W, perm, tuple(species), ncomp == 1)


def conservation_rows(A, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Left kernel of ``A`` row-reduced to ``(W' I_r)`` after a column permutation.

    Returns ``(W, perm)`` with ``W`` in the original coordinates and ``perm``
    listing the n-r free coordinates followed by the r pivot coordinates.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    N = la.null_space(A.T, rcond=tol) if A.any() else np.eye(n)
    W0 = N.T
    r = W0.shape[0]
    if r == 0:
        return np.zeros((0, n)), np.arange(n)
    _, _, piv = la.qr(W0, pivoting=True)
    pivots = np.sort(piv[:r])
    rest = np.array([i for i in range(n) if i not in set(pivots)], dtype=int)
    W = np.linalg.solve(W0[:, pivots], W0)
    W[:, pivots] = np.eye(r)
    return W, np.concatenate([rest, pivots]).astype(int)


def reduced_matrix(sys: MonomolecularSystem, tol: float = 1e-9) -> np.ndarray:
    """``C = A11 - A12 W'`` in the permuted coordinates."""
    A, W, perm = sys.A, sys.W, sys.perm
    n, r = A.shape[0], sys.r
    scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
    if r and float(np.abs(W @ A).max()) > tol * scale * max(1.0, float(np.abs(W).max())):
        raise ValueError("W is not a left kernel of A")
    rank_A = np.linalg.matrix_rank(A, tol=tol * scale) if A.size else 0
    if (np.linalg.matrix_rank(W) if r else 0) != r or rank_A != n - r:
        raise ValueError(f"rank mismatch: rank(A)={rank_A}, n={n}, r={r}")
    Wp = W[:, perm]
    if r and not np.allclose(Wp[:, n - r:], np.eye(r), atol=1e-12):
        raise ValueError("W is not row-reduced to (W' I_r) under perm")
    Ap = A[np.ix_(perm, perm)]
    k = n - r
    return Ap[:k, :k] - Ap[:k, k:] @ Wp[:, :k]


def reduced_spectrum(sys: MonomolecularSystem) -> np.ndarray:
    """Eigenvalues of the reduced matrix; equal to those of A minus r zeros."""
    C = reduced_matrix(sys)
    return np.linalg.eigvals(C) if C.size else np.empty(0, complex)


def spectral_abscissa(sys: MonomolecularSystem) -> float:
    ev = reduced_spectrum(sys)
    return float(ev.real.max()) if ev.size else -np.inf


def extract_monomolecular(net: ReactionNetwork, rates: RateAssignment, x, flower) -> MonomolecularSystem:
    """Monomolecular abstraction of one flower at state ``x``.

    Each reaction ``i' + catalysts -> i + catalysts`` with both ends in the
    flower contributes its rate times the catalyst concentrations to
    ``A[i, i']`` and subtracts it from ``A[i', i']``. Reactions switched off
    by a zero catalyst are listed in ``switched_off``; they can break the
    strong connectivity the spectral argument relies on.
    """
    x = np.asarray(x, dtype=float)
    if not isinstance(flower, Flower):
        flower = next(fl for fl in net.flowers if fl.id == flower)
    members = list(flower.members)
    pos = {s: i for i, s in enumerate(members)}
    n = len(members)
    A = np.zeros((n, n))
    k = rates.vector(net)
    off = []
    for j, rxn in enumerate(net.reactions):
        change = rxn.net_change()
        src = [s for s, c in change.items() if c < 0]
        dst = [s for s, c in change.items() if c > 0]
        if len(src) != 1 or src[0] not in pos:
            continue
        if len(dst) != 1 or dst[0] not in pos:
            raise ValueError(f"reaction {j} leaves flower {flower.id}")
        eff = k[j]
        for s, c in rxn.catalysts().items():
            eff *= x[s] ** c
        i_src, i_dst = pos[src[0]], pos[dst[0]]
        A[i_dst, i_src] += eff
        A[i_src, i_src] -= eff
        if eff == 0.0:
            off.append((net.names[src[0]], net.names[dst[0]]))
    sys = MonomolecularSystem.from_matrix(A, [net.names[s] for s in members])
    sys.switched_off = off
    return sys


def flower_spectra(net: ReactionNetwork, rates: RateAssignment, x, flowers=None) -> dict:
    """Reduced spectrum, abscissa and connectivity for each flower."""
    out = {}
    for fl in net.flowers:
        if flowers is not None and fl.id not in flowers:
            continue
        sys = extract_monomolecular(net, rates, x, fl)
        try:
            ev = reduced_spectrum(sys)
        except ValueError:
            ev = None
        out[fl.id] = dict(
            eigenvalues=ev,
            abscissa=float(ev.real.max()) if ev is not None and ev.size else None,
            strongly_connected=sys.strongly_connected,
            switched_off=sys.switched_off,
        )
    return out


@dataclass
class RateFit:
    rate: float
    intercept: float
    r2: float
    window: tuple
    n_points: int
    warning: str | None = None


def fit_convergence_rate(traj, reference=None, window=(0.2, 0.8), floor: float = 1e-13) -> RateFit:
    """Least-squares line through ``(t, log ||x(t) - a||_inf)`` over a time window.

    ``window`` is a pair of fractions of the trajectory's time span. When
    distances inside the window fall below ``floor`` the window is cut back to
    the last time above it and a warning is attached.
    """
    times = np.asarray(traj.times, dtype=float)
    states = np.asarray(traj.states, dtype=float)
    a = states[-1] if reference is None else np.asarray(reference, dtype=float)
    lo_f, hi_f = window
    if not 0 <= lo_f < hi_f <= 1:
        raise ValueError(f"window must satisfy 0 <= lo < hi <= 1, got {window}")
    d = np.max(np.abs(states - a), axis=1)
    t0, t1 = times[0], times[-1]
    lo, hi = t0 + lo_f * (t1 - t0), t0 + hi_f * (t1 - t0)
    note = None
    inside = (times >= lo) & (times <= hi)
    if np.any(inside & (d < floor)):
        above = np.flatnonzero(d >= floor)
        if above.size == 0:
            raise ValueError("trajectory never leaves the distance floor")
        t_end = times[above[-1]]
        lo, hi = t0 + lo_f * (t_end - t0), t0 + hi_f * (t_end - t0)
        inside = (times >= lo) & (times <= hi) & (d >= floor)
        note = f"window shrunk to [{lo:.4g}, {hi:.4g}]: distances fell below {floor:g}"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    if inside.sum() < 3:
        raise ValueError("fewer than 3 points in the fit window")
    t, y = times[inside], np.log(d[inside])
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-slope), float(intercept), r2, (float(lo), float(hi)), int(inside.sum()), note)
