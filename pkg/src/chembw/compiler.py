"""Compile an HMM signature into the Baum-Welch reaction network.

Every reaction moves one molecule between a flower's center and one of its
petal species; all other participants are catalysts. Both reactions of a
petal carry the petal species' name as their rate key, so any
:class:`RateAssignment` keyed by rate key is permissible by construction.

Species indices are 0-based in code and 1-based in species names.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .crn import Flower, RateAssignment, Reaction, ReactionNetwork, Species
from .hmm import Hmm, check_observations

KINDS = ("pi", "alpha", "beta", "gamma", "xi", "theta", "psi", "E")
FAMILIES = ("forward_init", "forward", "backward", "gamma", "xi", "theta", "psi")
PARTS = {
    "forward": ("forward_init", "forward"),
    "backward": ("backward",),
    "expectation": ("gamma", "xi"),
    "maximization": ("theta", "psi"),
}


@dataclass(frozen=True)
class CompilerConfig:
    n_hidden: int
    n_visible: int
    L: int
    h_star: int = 0
    v_star: int = 0

    def __post_init__(self):
        if self.n_hidden < 1 or self.n_visible < 1:
            raise ValueError("need at least one hidden and one visible state")
        if self.L < 2:
            raise ValueError(f"sequence length must be >= 2, got {self.L}")
        if not 0 <= self.h_star < self.n_hidden:
            raise ValueError(f"h_star={self.h_star} is not a hidden state index")
        if not 0 <= self.v_star < self.n_visible:
            raise ValueError(f"v_star={self.v_star} is not a visible state index")


@dataclass(frozen=True, eq=False)
class SpeciesLayout:
    """Species id arrays, one per kind, indexed like the HMM quantities."""

    config: CompilerConfig
    pi: np.ndarray  # [h]
    alpha: np.ndarray  # [l, h]
    beta: np.ndarray  # [l, h]
    gamma: np.ndarray  # [l, h]
    xi: np.ndarray  # [l, g, h], l < L-1
    theta: np.ndarray  # [g, h]
    psi: np.ndarray  # [h, w]
    E: np.ndarray  # [l, w]

    @property
    def n_species(self) -> int:
        return sum(getattr(self, k).size for k in KINDS)

    def ids(self, *kinds) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in kinds]) if kinds else np.empty(0, int)

    def counts(self) -> dict:
        return {k: int(getattr(self, k).size) for k in KINDS}


def species_count(n_hidden: int, n_visible: int, L: int) -> int:
    H, V = n_hidden, n_visible
    return H + 3 * H * L + H * H + H * V + L * V + H * H * (L - 1)


def tabulated_reaction_counts(n_hidden: int, n_visible: int, L: int) -> dict:
    """Per-part non-null reaction counts as tabulated with the construction."""
    H, V = n_hidden, n_visible
    return {
        "forward": 2 * (H - 1) * V + 2 * H * (H - 1) * (L - 1) * V,
        "backward": 2 * H * (H - 1) * V * (L - 1),
        "expectation": 2 * L * (H - 1) + 2 * (L - 1) * (H * H - 1),
        "maximization": 2 * H * (H - 1) * (L - 1) + 2 * H * L * (V - 1),
    }


def reaction_counts(n_hidden: int, n_visible: int, L: int) -> dict:
    """Per-part counts of the reactions actually emitted by :func:`compile_network`.

    Differs from :func:`tabulated_reaction_counts` only in the xi family, which
    needs one reaction per visible symbol to select psi[h, v_{l+1}].
    """
    H, V = n_hidden, n_visible
    counts = tabulated_reaction_counts(H, V, L)
    counts["expectation"] = 2 * L * (H - 1) + 2 * (L - 1) * (H * H - 1) * V
    return counts


def petal_count(n_hidden: int, n_visible: int, L: int) -> int:
    H, V = n_hidden, n_visible
    return (H - 1) * (3 * L - 1) + (L - 1) * (H * H - 1) + H * (H - 1) + H * (V - 1)


def compile_network(config: CompilerConfig) -> tuple[ReactionNetwork, SpeciesLayout]:
    H, V, L = config.n_hidden, config.n_visible, config.L
    hs, vs = config.h_star, config.v_star

    species: list[Species] = []

    def block(kind, shape):
        ids = np.arange(len(species), len(species) + int(np.prod(shape))).reshape(shape)
        for idx in np.ndindex(*shape):
            species.append(Species(len(species), kind, idx))
        return ids

    layout = SpeciesLayout(
        config,
        pi=block("pi", (H,)),
        alpha=block("alpha", (L, H)),
        beta=block("beta", (L, H)),
        gamma=block("gamma", (L, H)),
        xi=block("xi", (L - 1, H, H)),
        theta=block("theta", (H, H)),
        psi=block("psi", (H, V)),
        E=block("E", (L, V)),
    )
    names = [s.name for s in species]
    al, be, ga, xi = layout.alpha, layout.beta, layout.gamma, layout.xi
    th, ps, pi, E = layout.theta, layout.psi, layout.pi, layout.E

    reactions: list[Reaction] = []

    def petal(center, leaf, to_center_cats, to_leaf_cats, family):
        """Append leaf -> center and center -> leaf, each with its own catalysts."""
        key = names[leaf]
        fwd = [(leaf, 1)] + [(c, 1) for c in to_center_cats]
        reactions.append(Reaction(fwd, [(center, 1)] + fwd[1:], key, family))
        bwd = [(center, 1)] + [(c, 1) for c in to_leaf_cats]
        reactions.append(Reaction(bwd, [(leaf, 1)] + bwd[1:], key, family))

    others = [h for h in range(H) if h != hs]

    for h, w in product(others, range(V)):
        petal(al[0, hs], al[0, h], [pi[hs], ps[hs, w], E[0, w]], [pi[h], ps[h, w], E[0, w]], "forward_init")
    for l, g, h, w in product(range(1, L), range(H), others, range(V)):
        petal(
            al[l, hs], al[l, h],
            [al[l - 1, g], th[g, hs], ps[hs, w], E[l, w]],
            [al[l - 1, g], th[g, h], ps[h, w], E[l, w]],
            "forward",
        )
    for l, g, h, w in product(range(L - 1), range(H), others, range(V)):
        petal(
            be[l, hs], be[l, h],
            [be[l + 1, g], th[hs, g], ps[g, w], E[l + 1, w]],
            [be[l + 1, g], th[h, g], ps[g, w], E[l + 1, w]],
            "backward",
        )
    for l, h in product(range(L), others):
        petal(ga[l, hs], ga[l, h], [al[l, hs], be[l, hs]], [al[l, h], be[l, h]], "gamma")
    for l, g, h, w in product(range(L - 1), range(H), range(H), range(V)):
        if (g, h) == (hs, hs):
            continue
        petal(
            xi[l, hs, hs], xi[l, g, h],
            [al[l, hs], th[hs, hs], be[l + 1, hs], ps[hs, w], E[l + 1, w]],
            # xi[l,g,h] ∝ alpha[l,g] theta[g,h] psi[h,v_{l+1}] beta[l+1,h]
            [al[l, g], th[g, h], be[l + 1, h], ps[h, w], E[l + 1, w]],
            "xi",
        )
    for g, h, l in product(range(H), others, range(L - 1)):
        petal(th[g, hs], th[g, h], [xi[l, g, hs]], [xi[l, g, h]], "theta")
    for h, w, l in product(range(H), range(V), range(L)):
        if w == vs:
            continue
        petal(ps[h, vs], ps[h, w], [ga[l, h], E[l, vs]], [ga[l, h], E[l, w]], "psi")

    flowers = []

    def flower(fid, center, leaves):
        flowers.append(Flower(fid, int(center), tuple(int(s) for s in leaves)))

    for l in range(L):
        flower(f"alpha[{l + 1}]", al[l, hs], [al[l, h] for h in others])
    for l in range(L - 1):
        flower(f"beta[{l + 1}]", be[l, hs], [be[l, h] for h in others])
    for l in range(L):
        flower(f"gamma[{l + 1}]", ga[l, hs], [ga[l, h] for h in others])
    for l in range(L - 1):
        flower(f"xi[{l + 1}]", xi[l, hs, hs], [xi[l, g, h] for g, h in product(range(H), range(H)) if (g, h) != (hs, hs)])
    for g in range(H):
        flower(f"theta[{g + 1}]", th[g, hs], [th[g, h] for h in others])
    for h in range(H):
        flower(f"psi[{h + 1}]", ps[h, vs], [ps[h, w] for w in range(V) if w != vs])

    return ReactionNetwork(species, reactions, flowers), layout


def compile_for(hmm: Hmm, L: int, h_star: int = 0, v_star: int = 0):
    return compile_network(CompilerConfig(hmm.n_hidden, hmm.n_visible, L, h_star, v_star))


def count_by_part(net: ReactionNetwork) -> dict:
    fam = {}
    for rxn in net.reactions:
        fam[rxn.family] = fam.get(rxn.family, 0) + 1
    return {part: sum(fam.get(f, 0) for f in fams) for part, fams in PARTS.items()}


def default_rates(net: ReactionNetwork, value: float = 1.0) -> RateAssignment:
    """One rate per petal, all equal to ``value``."""
    return RateAssignment.uniform(net.rate_keys, value)


def random_rates(net: ReactionNetwork, rng: np.random.Generator, low=0.1, high=10.0) -> RateAssignment:
    """Log-uniform petal rates in ``[low, high]``."""
    vals = np.exp(rng.uniform(np.log(low), np.log(high), size=len(net.rate_keys)))
    return RateAssignment(dict(zip(net.rate_keys, vals)))


def initial_concentrations(
    layout: SpeciesLayout,
    hmm: Hmm,
    obs,
    seed: int = 0,
    beta_value: float = 1.0,
    low: float = 0.5,
    high: float = 1.5,
) -> np.ndarray:
    """Starting state for the chemical run.

    E is the one-hot encoding of ``obs``, the last beta layer is the constant
    ``beta_value``, pi/theta/psi come from ``hmm``, and every other species is
    drawn uniformly from ``[low, high]``. Each gamma and xi flower is then
    rescaled to total 1: the M-step reactions weigh positions by those flower
    totals, so they must agree across positions.
    """
    cfg = layout.config
    obs = check_observations(obs, hmm.n_visible)
    if len(obs) != cfg.L:
        raise ValueError(f"sequence length {len(obs)} does not match compiled L={cfg.L}")
    if (hmm.n_hidden, hmm.n_visible) != (cfg.n_hidden, cfg.n_visible):
        raise ValueError("HMM dimensions do not match the compiled network")
    rng = np.random.default_rng(seed)
    x = np.zeros(layout.n_species)
    free = layout.ids("alpha", "beta", "gamma", "xi")
    x[free] = rng.uniform(low, high, size=free.size)
    for block in (layout.gamma, layout.xi):
        for l in range(block.shape[0]):
            ids = block[l].ravel()
            x[ids] /= x[ids].sum()
    x[layout.beta[-1]] = beta_value
    x[layout.pi] = hmm.pi
    x[layout.theta] = hmm.theta
    x[layout.psi] = hmm.psi
    x[layout.E[np.arange(cfg.L), obs]] = 1.0
    return x


def embed_state(layout: SpeciesLayout, hmm: Hmm, obs, alpha, beta, gamma, xi, beta_value: float = 1.0):
    """Concentration vector holding the given HMM quantities.

    The last beta layer is set to the constant ``beta_value`` (any direction
    of a uniform vector is equivalent for the backward recursion).
    """
    cfg = layout.config
    obs = check_observations(obs, hmm.n_visible)
    x = np.zeros(layout.n_species)
    x[layout.pi] = hmm.pi
    x[layout.theta] = hmm.theta
    x[layout.psi] = hmm.psi
    x[layout.alpha] = alpha
    x[layout.beta] = beta
    x[layout.beta[-1]] = beta_value
    x[layout.gamma] = gamma
    x[layout.xi] = xi
    x[layout.E[np.arange(cfg.L), obs]] = 1.0
    return x
