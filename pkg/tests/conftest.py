import numpy as np
import pytest

from chembw.hmm import Hmm

EX1_SEQ = "1112112221221111222121122"
EX2_SEQ = "12121"


def example_hmm() -> Hmm:
    return Hmm.from_arrays([0.6, 0.4], [[0.6, 0.4], [0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]])


def obs_from(digits: str) -> np.ndarray:
    return np.array([int(c) - 1 for c in digits])


def sample_sequence(hmm: Hmm, L: int, rng) -> np.ndarray:
    x = rng.choice(hmm.n_hidden, p=hmm.pi)
    out = []
    for _ in range(L):
        out.append(rng.choice(hmm.n_visible, p=hmm.psi[x]))
        x = rng.choice(hmm.n_hidden, p=hmm.theta[x])
    return np.array(out)


def random_generator_matrix(rng, n: int, blocks: int = 1, density: float = 0.6) -> np.ndarray:
    """Column-sum-zero matrix with nonnegative off-diagonal, block diagonal."""
    sizes = np.diff(np.sort(np.concatenate([[0, n], rng.choice(np.arange(1, n), blocks - 1, replace=False)])))
    A = np.zeros((n, n))
    start = 0
    for m in sizes:
        blk = rng.uniform(0.1, 3.0, (m, m)) * (rng.random((m, m)) < density)
        # a cycle keeps each block strongly connected
        for i in range(m):
            blk[(i + 1) % m, i] = max(blk[(i + 1) % m, i], rng.uniform(0.1, 3.0))
        np.fill_diagonal(blk, 0.0)
        np.fill_diagonal(blk, -blk.sum(axis=0))
        A[start:start + m, start:start + m] = blk
        start += m
    return A


def match_eigenvalues(a, b) -> float:
    """Max distance after optimally pairing two eigenvalue multisets."""
    from scipy.optimize import linear_sum_assignment

    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


@pytest.fixture
def ex_hmm():
    return example_hmm()


@pytest.fixture
def ex1_obs():
    return obs_from(EX1_SEQ)


@pytest.fixture
def ex2_obs():
    return obs_from(EX2_SEQ)


def embedded_fixed_point(hmm: Hmm, obs, h_star=None):
    """Classical Baum-Welch limit written into the compiled network's species."""
    from chembw import compiler
    from chembw.hmm import baum_welch, e_step

    res = baum_welch(hmm, obs, tol=1e-13)
    post = e_step(res.hmm, obs)
    h_star = hmm.n_hidden - 1 if h_star is None else h_star
    net, layout = compiler.compile_for(hmm, len(obs), h_star)
    x = compiler.embed_state(layout, res.hmm, obs, post.alpha, post.beta, post.gamma, post.xi)
    return res, net, layout, x
