import itertools

import numpy as np
import pytest

from chembw import compiler
from chembw.compiler import CompilerConfig, compile_network
from chembw.crn import export_network

GRID = list(itertools.product(range(1, 4), range(1, 4), range(2, 7)))


@pytest.mark.parametrize("H,V,L", GRID)
def test_species_count_formula(H, V, L):
    net, layout = compile_network(CompilerConfig(H, V, L))
    assert net.n_species == compiler.species_count(H, V, L) == layout.n_species


@pytest.mark.parametrize("H,V,L", GRID)
def test_reaction_counts_by_part(H, V, L):
    net, _ = compile_network(CompilerConfig(H, V, L))
    assert compiler.count_by_part(net) == compiler.reaction_counts(H, V, L)


@pytest.mark.parametrize("H,V,L", GRID)
def test_tabulated_counts_differ_only_in_xi_term(H, V, L):
    ours, table = compiler.reaction_counts(H, V, L), compiler.tabulated_reaction_counts(H, V, L)
    for part in ("forward", "backward", "maximization"):
        assert ours[part] == table[part]
    gap = 2 * (L - 1) * (H * H - 1) * (V - 1)
    assert ours["expectation"] - table["expectation"] == gap


@pytest.mark.parametrize("H,V,L", GRID)
def test_petal_count(H, V, L):
    net, _ = compile_network(CompilerConfig(H, V, L))
    assert len(net.rate_keys) == compiler.petal_count(H, V, L)


def test_example_sizes():
    net, _ = compile_network(CompilerConfig(2, 2, 25))
    assert net.n_species == 306
    assert compiler.count_by_part(net) == dict(forward=196, backward=192, expectation=338, maximization=196)
    assert len(net.rate_keys) == 150
    assert sum(compiler.tabulated_reaction_counts(2, 2, 25).values()) == 778


def test_single_hidden_state_has_no_hidden_reactions():
    net, _ = compile_network(CompilerConfig(1, 1, 2))
    assert len(net.reactions) == 0


@pytest.mark.parametrize("H,V,L", [(2, 2, 3), (3, 2, 4), (2, 3, 5), (3, 3, 2)])
def test_every_reaction_moves_one_molecule(H, V, L):
    net, layout = compile_network(CompilerConfig(H, V, L, h_star=H - 1, v_star=V - 1))
    E = set(layout.E.ravel())
    for rxn in net.reactions:
        change = rxn.net_change()
        assert sorted(change.values()) == [-1, 1]
        cats = rxn.catalysts()
        assert set(dict(rxn.reactants)) == set(cats) | {s for s, c in change.items() if c < 0}
        assert all(v == 1 for v in cats.values())
        assert not (set(change) & E)


def test_flower_counts():
    H, V, L = 3, 2, 5
    net, _ = compile_network(CompilerConfig(H, V, L))
    kinds = [fl.id.split("[")[0] for fl in net.flowers]
    assert {k: kinds.count(k) for k in set(kinds)} == dict(alpha=L, beta=L - 1, gamma=L, xi=L - 1, theta=H, psi=H)


def test_flowers_have_leaders_as_centers():
    net, layout = compile_network(CompilerConfig(3, 3, 3, h_star=2, v_star=1))
    centers = {fl.id: fl.center for fl in net.flowers}
    assert centers["alpha[2]"] == layout.alpha[1, 2]
    assert centers["xi[1]"] == layout.xi[0, 2, 2]
    assert centers["psi[1]"] == layout.psi[0, 1]


def test_xi_reverse_uses_destination_beta():
    # xi[l,g,h] is produced with catalysts alpha[l,g] theta[g,h] psi[h,w] beta[l+1,h]
    net, layout = compile_network(CompilerConfig(2, 2, 3, h_star=1))
    leaf = layout.xi[0, 1, 0]
    made = [r for r in net.reactions if r.net_change().get(leaf) == 1]
    assert made
    for r in made:
        cats = set(r.catalysts())
        assert {layout.alpha[0, 1], layout.theta[1, 0], layout.beta[1, 0]} <= cats


@pytest.mark.parametrize("kw", [dict(h_star=2), dict(h_star=-1), dict(v_star=2), dict(L=1)])
def test_invalid_config(kw):
    args = dict(n_hidden=2, n_visible=2, L=3) | kw
    with pytest.raises(ValueError):
        CompilerConfig(**args)


def test_leaders_change_export_not_counts():
    a, _ = compile_network(CompilerConfig(2, 2, 4, h_star=0))
    b, _ = compile_network(CompilerConfig(2, 2, 4, h_star=1))
    assert export_network(a, compiler.FAMILIES) != export_network(b, compiler.FAMILIES)
    assert compiler.count_by_part(a) == compiler.count_by_part(b)
    assert a.n_species == b.n_species


class TestRates:
    def test_default_rates(self):
        net, _ = compile_network(CompilerConfig(2, 2, 25))
        rates = compiler.default_rates(net)
        assert len(rates) == len(net.rate_keys) == 150
        assert set(rates.rates.values()) == {1.0}

    def test_random_rates_permissible(self):
        net, _ = compile_network(CompilerConfig(2, 3, 4))
        rates = compiler.random_rates(net, np.random.default_rng(0))
        vals = np.array(list(rates.rates.values()))
        assert vals.min() >= 0.1 and vals.max() <= 10.0
        k = rates.vector(net)
        for key in net.rate_keys:
            idx = [j for j, r in enumerate(net.reactions) if r.rate_key == key]
            assert len(idx) >= 2 and len(set(k[idx])) == 1


class TestInitialConcentrations:
    def test_example_setup(self, ex_hmm, ex1_obs):
        net, layout = compiler.compile_for(ex_hmm, len(ex1_obs))
        x = compiler.initial_concentrations(layout, ex_hmm, ex1_obs)
        assert x[layout.E[0, 0]] == 1.0 and x[layout.E[0, 1]] == 0.0
        assert np.array_equal(x[layout.E], np.eye(2)[ex1_obs])
        assert np.all(x[layout.beta[-1]] == 1.0)
        assert np.array_equal(x[layout.theta], ex_hmm.theta)
        assert np.array_equal(x[layout.psi], ex_hmm.psi)
        assert np.array_equal(x[layout.pi], ex_hmm.pi)

    def test_seeds(self, ex_hmm, ex1_obs):
        _, layout = compiler.compile_for(ex_hmm, len(ex1_obs))
        a = compiler.initial_concentrations(layout, ex_hmm, ex1_obs, seed=1)
        b = compiler.initial_concentrations(layout, ex_hmm, ex1_obs, seed=2)
        fixed = layout.ids("E", "pi", "theta", "psi")
        assert np.array_equal(a[fixed], b[fixed])
        assert np.array_equal(a[layout.beta[-1]], b[layout.beta[-1]])
        rand = layout.ids("alpha", "gamma", "xi")
        assert not np.array_equal(a[rand], b[rand])
        assert a[rand].min() > 0 and b[rand].min() > 0
        assert np.array_equal(a, compiler.initial_concentrations(layout, ex_hmm, ex1_obs, seed=1))

    def test_gamma_xi_flowers_have_unit_total(self, ex_hmm, ex1_obs):
        _, layout = compiler.compile_for(ex_hmm, len(ex1_obs))
        x = compiler.initial_concentrations(layout, ex_hmm, ex1_obs, seed=5)
        assert np.allclose(x[layout.gamma].sum(axis=1), 1.0)
        assert np.allclose(x[layout.xi].sum(axis=(1, 2)), 1.0)

    def test_length_mismatch(self, ex_hmm, ex1_obs):
        _, layout = compiler.compile_for(ex_hmm, 5)
        with pytest.raises(ValueError, match="length"):
            compiler.initial_concentrations(layout, ex_hmm, ex1_obs)
