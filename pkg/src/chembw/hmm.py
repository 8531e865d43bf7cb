"""Classical HMM routines: forward/backward, E and M steps, Baum-Welch.

These are the reference the chemical system is checked against. Forward and
backward rows are normalized per position; the per-position normalizers are
returned so the exact likelihood can be recovered.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12


class DegenerateLikelihoodError(ValueError):
    """The model assigns probability zero to the observed sequence."""


def check_stochastic(mat, name: str, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    mat = np.array(mat, dtype=float)
    if mat.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)) or np.any(mat < 0):
        raise ValueError(f"{name} has negative or non-finite entries")
    sums = mat.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > tol:
            raise ValueError(f"{name} row {i} sums to {s!r}, expected 1")
    return mat


@dataclass(frozen=True)
class Hmm:
    """HMM (H, V, theta, psi, pi) with labelled hidden and visible states."""

    hidden_states: tuple
    visible_states: tuple
    pi: np.ndarray
    theta: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        hidden = tuple(self.hidden_states)
        visible = tuple(self.visible_states)
        if not hidden or not visible:
            raise ValueError("hidden_states and visible_states must be non-empty")
        if len(set(hidden)) != len(hidden) or len(set(visible)) != len(visible):
            raise ValueError("state labels must be unique")
        pi = np.array(self.pi, dtype=float)
        if pi.shape != (len(hidden),):
            raise ValueError(f"pi has shape {pi.shape}, expected ({len(hidden)},)")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError(f"pi must be a probability vector, sums to {pi.sum()!r}")
        theta = check_stochastic(self.theta, "theta")
        psi = check_stochastic(self.psi, "psi")
        if theta.shape != (len(hidden), len(hidden)):
            raise ValueError(f"theta has shape {theta.shape}, expected |H|x|H|")
        if psi.shape != (len(hidden), len(visible)):
            raise ValueError(f"psi has shape {psi.shape}, expected |H|x|V|")
        for arr in (pi, theta, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "hidden_states", hidden)
        object.__setattr__(self, "visible_states", visible)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_states)

    @property
    def n_visible(self) -> int:
        return len(self.visible_states)

    def with_params(self, theta, psi) -> "Hmm":
        return Hmm(self.hidden_states, self.visible_states, self.pi, theta, psi)

    @classmethod
    def from_arrays(cls, pi, theta, psi) -> "Hmm":
        """Build an HMM with default labels H1.. and V1..."""
        psi = np.asarray(psi, dtype=float)
        hidden = tuple(f"H{i + 1}" for i in range(psi.shape[0]))
        visible = tuple(f"V{i + 1}" for i in range(psi.shape[1]))
        return cls(hidden, visible, pi, theta, psi)


def check_observations(obs: Sequence[int], n_visible: int) -> np.ndarray:
    """Validate an observation sequence of visible-state indices (L >= 2)."""
    arr = np.asarray(obs)
    if arr.ndim != 1:
        raise ValueError("observation sequence must be one-dimensional")
    if len(arr) < 2:
        raise ValueError(f"observation sequence needs length >= 2, got {len(arr)}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("observations must be integer indices into visible_states")
    if arr.min() < 0 or arr.max() >= n_visible:
        raise ValueError(f"observation index out of range 0..{n_visible - 1}")
    return arr.astype(np.intp)


def forward(hmm: Hmm, obs) -> tuple[np.ndarray, np.ndarray]:
    """Scaled forward pass.

    Returns ``(alpha, scale)`` where every row of ``alpha`` sums to one and
    the unscaled likelihoods are ``alpha[l] * prod(scale[:l + 1])``.
    """
    obs = check_observations(obs, hmm.n_visible)
    L, n = len(obs), hmm.n_hidden
    alpha = np.empty((L, n))
    scale = np.empty(L)
    row = hmm.pi * hmm.psi[:, obs[0]]
    for l in range(L):
        if l > 0:
            row = (alpha[l - 1] @ hmm.theta) * hmm.psi[:, obs[l]]
        s = row.sum()
        if s <= 0:
            raise DegenerateLikelihoodError(f"forward likelihood vanishes at position {l + 1}")
        alpha[l] = row / s
        scale[l] = s
    return alpha, scale


def backward(hmm: Hmm, obs) -> tuple[np.ndarray, np.ndarray]:
    """Scaled backward pass.

    Rows of ``beta`` sum to one; unscaled values are
    ``beta[l] * prod(scale[l:])`` (so ``scale[-1] == |H|`` for the all-ones
    initialization).
    """
    obs = check_observations(obs, hmm.n_visible)
    L, n = len(obs), hmm.n_hidden
    beta = np.empty((L, n))
    scale = np.empty(L)
    row = np.ones(n)
    for l in range(L - 1, -1, -1):
        if l < L - 1:
            row = hmm.theta @ (hmm.psi[:, obs[l + 1]] * beta[l + 1])
        s = row.sum()
        if s <= 0:
            raise DegenerateLikelihoodError(f"backward likelihood vanishes at position {l + 1}")
        beta[l] = row / s
        scale[l] = s
    return beta, scale


def log_likelihood(hmm: Hmm, obs) -> float:
    _, scale = forward(hmm, obs)
    return float(np.log(scale).sum())


@dataclass(frozen=True)
class Posteriors:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    log_likelihood: float


def posteriors_from(hmm: Hmm, obs, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """gamma and xi from forward/backward rows given only up to per-row scale."""
    obs = check_observations(obs, hmm.n_visible)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    ab = alpha * beta
    denom = ab.sum(axis=1, keepdims=True)
    if np.any(denom <= 0):
        raise DegenerateLikelihoodError("sum_h alpha*beta vanishes")
    gamma = ab / denom
    # xi[l, g, h] ∝ alpha[l, g] theta[g, h] psi[h, v_{l+1}] beta[l+1, h]
    emit = hmm.psi[:, obs[1:]].T * beta[1:]
    xi = alpha[:-1, :, None] * hmm.theta[None, :, :] * emit[:, None, :]
    tot = xi.sum(axis=(1, 2), keepdims=True)
    if np.any(tot <= 0):
        raise DegenerateLikelihoodError("transition posterior normalizer vanishes")
    return gamma, xi / tot


def e_step(hmm: Hmm, obs) -> Posteriors:
    alpha, a_scale = forward(hmm, obs)
    beta, _ = backward(hmm, obs)
    gamma, xi = posteriors_from(hmm, obs, alpha, beta)
    return Posteriors(alpha, beta, gamma, xi, float(np.log(a_scale).sum()))


class MStep(NamedTuple):
    theta: np.ndarray
    psi: np.ndarray
    unidentifiable: list


def m_step(post: Posteriors, obs, hmm: Hmm) -> MStep:
    """Re-estimate theta and psi (pi is held fixed).

    Rows whose denominator is zero (state never visited) keep the values in
    ``hmm`` and are listed in ``unidentifiable`` as ``("theta", g)`` or
    ``("psi", h)``.
    """
    obs = check_observations(obs, hmm.n_visible)
    counts = post.xi.sum(axis=0)
    theta = hmm.theta.copy()
    psi = hmm.psi.copy()
    flagged = []
    for g, row in enumerate(counts):
        s = row.sum()
        if s > 0:
            theta[g] = row / s
        else:
            flagged.append(("theta", g))
    onehot = np.zeros((len(obs), hmm.n_visible))
    onehot[np.arange(len(obs)), obs] = 1.0
    emit = post.gamma.T @ onehot
    for h, row in enumerate(emit):
        s = row.sum()
        if s > 0:
            psi[h] = row / s
        else:
            flagged.append(("psi", h))
    return MStep(theta, psi, flagged)


@dataclass
class BaumWelchResult:
    hmm: Hmm
    log_likelihoods: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    max_change: float = np.inf

    @property
    def theta(self) -> np.ndarray:
        return self.hmm.theta

    @property
    def psi(self) -> np.ndarray:
        return self.hmm.psi


def baum_welch(hmm: Hmm, obs, tol: float = 1e-10, max_iters: int = 100_000) -> BaumWelchResult:
    """Alternate E and M steps until the max-norm parameter change drops below ``tol``.

    ``log_likelihoods[i]`` is the likelihood of the parameters entering
    iteration ``i``. When ``max_iters`` is exhausted the latest parameters
    are returned with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    obs = check_observations(obs, hmm.n_visible)
    res = BaumWelchResult(hmm)
    current = hmm
    for it in range(1, max_iters + 1):
        post = e_step(current, obs)
        res.log_likelihoods.append(post.log_likelihood)
        upd = m_step(post, obs, current)
        change = max(np.abs(upd.theta - current.theta).max(), np.abs(upd.psi - current.psi).max())
        current = current.with_params(_renormalize(upd.theta), _renormalize(upd.psi))
        res.iterations = it
        res.max_change = float(change)
        if change < tol:
            res.converged = True
            break
    res.hmm = current
    return res


def _renormalize(mat: np.ndarray) -> np.ndarray:
    # division leaves row sums within a few ulp of 1; keep them inside the validator's tolerance
    return mat / mat.sum(axis=1, keepdims=True)


def oracle_likelihood(hmm: Hmm, obs, max_paths: int = 10**6) -> float:
    """Exact likelihood by summing over every hidden path.

    Independent of :func:`forward`; used only to check it.
    """
    obs = check_observations(obs, hmm.n_visible)
    L, n = len(obs), hmm.n_hidden
    if n**L > max_paths:
        raise ValueError(f"|H|^L = {n}^{L} exceeds the enumeration guard {max_paths}")
    total = 0.0
    for path in itertools.product(range(n), repeat=L):
        p = hmm.pi[path[0]] * hmm.psi[path[0], obs[0]]
        for l in range(1, L):
            p *= hmm.theta[path[l - 1], path[l]] * hmm.psi[path[l], obs[l]]
        total += p
    return total


def random_hmm(rng: np.random.Generator, n_hidden: int, n_visible: int, floor: float = 0.0) -> Hmm:
    """Random HMM with Dirichlet(1) rows, optionally bounded away from zero."""

    def rows(k, m):
        mat = rng.dirichlet(np.ones(m), size=k) + floor
        return mat / mat.sum(axis=1, keepdims=True)

    return Hmm.from_arrays(rows(1, n_hidden)[0], rows(n_hidden, n_hidden), rows(n_hidden, n_visible))
