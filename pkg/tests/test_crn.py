import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chembw import compiler
from chembw.crn import (
    Flower,
    RateAssignment,
    Reaction,
    ReactionNetwork,
    Species,
    conserved_sums,
    export_network,
    flower_totals,
    is_positive,
    mass_action_rhs,
    reaction_fluxes,
)


def toy(reactions, n, flowers=()):
    species = [Species(i, "x", (i,)) for i in range(n)]
    return ReactionNetwork(species, reactions, flowers)


class TestMassAction:
    def test_single_monomolecular(self):
        net = toy([Reaction([(0, 1)], [(1, 1)], "k")], 2)
        assert np.allclose(mass_action_rhs(net, RateAssignment({"k": 1.0}), [1.0, 0.0]), [-1.0, 1.0])

    def test_zero_catalyst_switches_off(self):
        net = toy([Reaction([(0, 1), (2, 1)], [(1, 1), (2, 1)], "k")], 3)
        rhs = mass_action_rhs(net, RateAssignment({"k": 2.0}), [3.0, 0.0, 0.0])
        assert np.array_equal(rhs, np.zeros(3))

    def test_higher_order(self):
        net = toy([Reaction([(0, 2)], [(1, 1)], "k")], 2)
        rhs = mass_action_rhs(net, RateAssignment({"k": 0.5}), [3.0, 1.0])
        assert np.allclose(rhs, [-9.0, 4.5])

    def test_shape_checked(self):
        net = toy([Reaction([(0, 1)], [(1, 1)], "k")], 2)
        with pytest.raises(ValueError):
            mass_action_rhs(net, RateAssignment({"k": 1.0}), [1.0])

    def test_missing_rate(self):
        net = toy([Reaction([(0, 1)], [(1, 1)], "k")], 2)
        with pytest.raises(KeyError):
            mass_action_rhs(net, RateAssignment({"j": 1.0}), [1.0, 0.0])


class TestTypes:
    def test_null_reaction_rejected(self):
        with pytest.raises(ValueError, match="null"):
            Reaction([(0, 1), (1, 1)], [(1, 1), (0, 1)], "k")

    @pytest.mark.parametrize("count", [0, -1, 1.5])
    def test_counts_positive_integers(self, count):
        with pytest.raises(ValueError):
            Reaction([(0, count)], [(1, 1)], "k")

    def test_rates_positive(self):
        with pytest.raises(ValueError):
            RateAssignment({"k": 0.0})

    def test_species_names(self):
        assert Species(3, "alpha", (0, 1)).name == "alpha[1,2]"

    def test_species_ids_contiguous(self):
        with pytest.raises(ValueError):
            ReactionNetwork([Species(1, "x", (0,))], [])

    def test_flowers_disjoint(self):
        with pytest.raises(ValueError, match="overlap"):
            toy([], 3, [Flower("a", 0, (1,)), Flower("b", 1, (2,))])

    def test_catalysts(self):
        r = Reaction([(0, 1), (2, 1)], [(1, 1), (2, 1)], "k")
        assert r.catalysts() == {2: 1}
        assert r.net_change() == {0: -1, 1: 1}


class TestPositivity:
    def test_small_but_positive(self):
        assert is_positive([1e-3, 1.0], 1e-6) == (True, [])

    @pytest.mark.parametrize("eps", [0.0, 1e-9, 0.5])
    def test_zero_entry(self, eps):
        ok, bad = is_positive([0.0, 1.0], eps, ["a", "b"])
        assert not ok and bad == ["a"]

    def test_negative_eps(self):
        with pytest.raises(ValueError):
            is_positive([1.0], -1.0)


@pytest.fixture(scope="module")
def net():
    return compiler.compile_network(compiler.CompilerConfig(3, 2, 4, h_star=1, v_star=1))


class TestBaumWelchNetwork:
    def test_flower_sums_conserved_symbolically(self, net):
        network, _ = net
        S = network.stoichiometry()
        for fl in network.flowers:
            assert np.array_equal(S[list(fl.members)].sum(axis=0), np.zeros(S.shape[1]))

    def test_petal_pairs_cancel(self, net):
        network, _ = net
        by_key = {}
        for rxn in network.reactions:
            by_key.setdefault(rxn.rate_key, []).append(rxn)
        for key, rxns in by_key.items():
            pairs = {}
            for r in rxns:
                (src,), (dst,) = [s for s, c in r.net_change().items() if c < 0], [s for s, c in r.net_change().items() if c > 0]
                pairs.setdefault(frozenset((src, dst)), []).append((src, dst))
            assert len(pairs) == 1, key
            moves = next(iter(pairs.values()))
            assert len({m for m in moves}) == 2  # both directions present

    def test_zero_catalyst_property(self, net):
        network, layout = net
        rng = np.random.default_rng(0)
        rates = compiler.random_rates(network, rng)
        x = rng.uniform(0.5, 1.5, network.n_species)
        cat = layout.theta[0, 0]
        x[cat] = 0.0
        flux = reaction_fluxes(network, rates, x)
        for j, rxn in enumerate(network.reactions):
            if cat in dict(rxn.reactants):
                assert flux[j] == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_flower_rhs_sums_vanish(self, net, seed):
        network, _ = net
        rng = np.random.default_rng(seed)
        rates = compiler.random_rates(network, rng)
        x = rng.uniform(0.0, 2.0, network.n_species)
        d = mass_action_rhs(network, rates, x)
        for fl in network.flowers:
            assert abs(d[list(fl.members)].sum()) < 1e-12 * max(1.0, np.abs(d).max())

    def test_conserved_sums(self, ex_hmm, ex1_obs):
        net, layout = compiler.compile_for(ex_hmm, len(ex1_obs))
        x = compiler.initial_concentrations(layout, ex_hmm, ex1_obs)
        sums = conserved_sums(net, x)
        assert sums["theta[1]"] == pytest.approx(1.0)
        assert len(sums) == len(net.flowers)
        tot = flower_totals(net, x)
        assert tot[layout.theta[1, 0]] == pytest.approx(1.0)
        assert tot[layout.E[0, 0]] == 1.0

    def test_empty_flower_map(self):
        net = toy([Reaction([(0, 1)], [(1, 1)], "k")], 2)
        assert conserved_sums(net, [1.0, 2.0]) == {}


class TestExport:
    def test_format_and_order(self):
        net = toy(
            [
                Reaction([(1, 1)], [(0, 1)], "b", "second"),
                Reaction([(0, 1), (2, 1)], [(1, 1), (2, 1)], "a", "first"),
            ],
            3,
        )
        text = export_network(net, ["first", "second"])
        lines = text.splitlines()
        assert lines[0] == "1 x[1] + 1 x[3] -> 1 x[2] + 1 x[3] ; rate_key=a ; family=first"
        assert lines[1].startswith("1 x[2] -> 1 x[1]")

    def test_reproducible(self, ex_hmm, ex1_obs):
        a = export_network(compiler.compile_for(ex_hmm, len(ex1_obs))[0], compiler.FAMILIES)
        b = export_network(compiler.compile_for(ex_hmm, len(ex1_obs))[0], compiler.FAMILIES)
        assert a == b and len(a.splitlines()) == 922
