"""Reaction networks under deterministic mass-action kinetics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Species:
    id: int
    kind: str
    index: tuple = ()

    @property
    def name(self) -> str:
        if not self.index:
            return self.kind
        # indices are stored 0-based and printed 1-based
        return f"{self.kind}[{','.join(str(i + 1) for i in self.index)}]"


@dataclass(frozen=True)
class Reaction:
    """``sum reactants -> sum products`` with sparse integer stoichiometry."""

    reactants: tuple
    products: tuple
    rate_key: str
    family: str = ""

    def __post_init__(self):
        reactants = _sparse(self.reactants)
        products = _sparse(self.products)
        if reactants == products:
            raise ValueError(f"null reaction for rate key {self.rate_key!r}")
        object.__setattr__(self, "reactants", reactants)
        object.__setattr__(self, "products", products)

    def net_change(self) -> dict:
        delta = dict.fromkeys({s for s, _ in self.reactants} | {s for s, _ in self.products}, 0)
        for s, c in self.reactants:
            delta[s] -= c
        for s, c in self.products:
            delta[s] += c
        return {s: c for s, c in delta.items() if c != 0}

    def catalysts(self) -> dict:
        """Species appearing with equal stoichiometry on both sides."""
        r, p = dict(self.reactants), dict(self.products)
        return {s: c for s, c in r.items() if p.get(s) == c}


def _sparse(terms) -> tuple:
    if isinstance(terms, Mapping):
        terms = terms.items()
    acc: dict = {}
    for s, c in terms:
        if int(c) != c or c <= 0:
            raise ValueError(f"stoichiometric count must be a positive integer, got {c!r}")
        acc[int(s)] = acc.get(int(s), 0) + int(c)
    return tuple(sorted(acc.items()))


@dataclass(frozen=True)
class Flower:
    """Star of petals around ``center``; each petal is one non-center species."""

    id: str
    center: int
    petals: tuple

    @property
    def members(self) -> tuple:
        return (self.center,) + tuple(self.petals)


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    species: tuple
    reactions: tuple
    flowers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "flowers", tuple(self.flowers))
        ids = [s.id for s in self.species]
        if ids != list(range(len(ids))):
            raise ValueError("species ids must be contiguous 0..n-1 in order")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError("species names must be unique")
        n = len(ids)
        for rxn in self.reactions:
            for s, _ in rxn.reactants + rxn.products:
                if not 0 <= s < n:
                    raise ValueError(f"reaction references unknown species id {s}")
        seen: set = set()
        for fl in self.flowers:
            members = set(fl.members)
            if len(members) != len(fl.members) or seen & members:
                raise ValueError(f"flower {fl.id} overlaps another flower")
            seen |= members

    @property
    def n_species(self) -> int:
        return len(self.species)

    @cached_property
    def names(self) -> list:
        return [s.name for s in self.species]

    @cached_property
    def index_of(self) -> dict:
        return {s.name: s.id for s in self.species}

    @cached_property
    def rate_keys(self) -> list:
        """Distinct rate keys in first-appearance order."""
        return list(dict.fromkeys(r.rate_key for r in self.reactions))

    @cached_property
    def flower_of(self) -> np.ndarray:
        """Flower position per species, -1 for species outside every flower."""
        out = np.full(self.n_species, -1, dtype=np.intp)
        for i, fl in enumerate(self.flowers):
            out[list(fl.members)] = i
        return out

    @cached_property
    def compiled(self) -> "kernels.CompiledNetwork":
        return kernels.CompiledNetwork.from_reactions(self.n_species, self.reactions)

    def stoichiometry(self) -> np.ndarray:
        """Dense n x m net-change matrix."""
        S = np.zeros((self.n_species, len(self.reactions)))
        for j, rxn in enumerate(self.reactions):
            for s, c in rxn.net_change().items():
                S[s, j] = c
        return S


@dataclass(frozen=True)
class RateAssignment:
    """Positive rate per rate key; every reaction sharing a key shares the rate."""

    rates: Mapping = field(default_factory=dict)

    def __post_init__(self):
        rates = {str(k): float(v) for k, v in dict(self.rates).items()}
        bad = [k for k, v in rates.items() if not v > 0 or not np.isfinite(v)]
        if bad:
            raise ValueError(f"rates must be positive and finite: {bad[:5]}")
        object.__setattr__(self, "rates", rates)

    def __len__(self) -> int:
        return len(self.rates)

    def vector(self, net: ReactionNetwork) -> np.ndarray:
        missing = [r.rate_key for r in net.reactions if r.rate_key not in self.rates]
        if missing:
            raise KeyError(f"no rate for keys {sorted(set(missing))[:5]}")
        return np.array([self.rates[r.rate_key] for r in net.reactions], dtype=float)

    @classmethod
    def uniform(cls, keys: Iterable[str], value: float = 1.0) -> "RateAssignment":
        return cls({k: value for k in keys})


def mass_action_rhs(net: ReactionNetwork, rates: RateAssignment, x) -> np.ndarray:
    """dx_i/dt = sum_j k_j (b_ij - a_ij) prod_s x_s^a_sj."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (net.n_species,):
        raise ValueError(f"state has shape {x.shape}, expected ({net.n_species},)")
    return net.compiled.rhs(x, rates.vector(net))


def reaction_fluxes(net: ReactionNetwork, rates: RateAssignment, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return net.compiled.fluxes(x, rates.vector(net))


def conserved_sums(net: ReactionNetwork, x) -> dict:
    x = np.asarray(x, dtype=float)
    return {fl.id: float(x[list(fl.members)].sum()) for fl in net.flowers}


def flower_totals(net: ReactionNetwork, x) -> np.ndarray:
    """Per-species total of the flower it belongs to (1.0 outside flowers)."""
    x = np.asarray(x, dtype=float)
    tot = np.ones(net.n_species)
    for fl in net.flowers:
        members = list(fl.members)
        tot[members] = x[members].sum()
    return tot


def is_positive(x, eps: float = 0.0, names=None) -> tuple[bool, list]:
    """True iff every entry exceeds ``eps``; also returns the violators.

    ``eps`` may be a scalar or one threshold per entry.
    """
    x = np.asarray(x, dtype=float)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), x.shape)
    if np.any(eps < 0):
        raise ValueError("eps must be nonnegative")
    bad = np.flatnonzero(~(x > eps))
    if names is None:
        names = [str(i) for i in range(len(x))]
    return len(bad) == 0, [names[i] for i in bad]


def format_reaction(net: ReactionNetwork, rxn: Reaction) -> str:
    def side(terms):
        return " + ".join(f"{c} {net.species[s].name}" for s, c in terms)

    return f"{side(rxn.reactants)} -> {side(rxn.products)} ; rate_key={rxn.rate_key} ; family={rxn.family}"


def export_network(net: ReactionNetwork, family_order: Iterable[str] = ()) -> str:
    """One reaction per line, ordered by consumed species id then family.

    Ties keep construction order, so the output is byte-reproducible.
    """
    rank = {f: i for i, f in enumerate(family_order)}

    def key(item):
        pos, rxn = item
        consumed = min(s for s, c in rxn.net_change().items() if c < 0) if rxn.net_change() else -1
        return consumed, rank.get(rxn.family, len(rank)), rxn.family, pos

    ordered = sorted(enumerate(net.reactions), key=key)
    return "".join(format_reaction(net, rxn) + "\n" for _, rxn in ordered)
