import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnlab.network import (
    IndexSets,
    NetworkSyntaxError,
    ReversiblePair,
    conservation_basis,
    format_network,
    is_complex_balanced,
    mass_action_rate,
    monomial,
    parse_network,
    rate_jacobian,
)

from oracles import symbolic_jacobian

NAMES = ["A", "B", "C", "D", "X1", "Y_2"]


# ---------------------------------------------------------------- parsing


def test_parse_abc(abc):
    assert abc.names == ["A", "B", "C"]
    p = abc.single_pair()
    assert p.alpha == (1, 2, 0)
    assert p.beta == (0, 1, 1)
    assert (p.k_fwd, p.k_bwd) == (1.0, 1.0)
    assert np.all(abc.diffusion == 1.0)


def test_parse_indexed_names():
    p = parse_network("A1 + A2 <-> 2 A3").single_pair()
    assert p.alpha == (1, 1, 0)
    assert p.beta == (0, 0, 2)


def test_parse_rates_and_whitespace():
    net = parse_network("  2X+Y<->Z ;kf=2.5 ,kr=1e-3  # comment")
    p = net.single_pair()
    assert p.alpha == (2, 1, 0)
    assert (p.k_fwd, p.k_bwd) == (2.5, 1e-3)


def test_repeated_species_merge():
    assert parse_network("B + B <-> C").single_pair().alpha == (2, 0)


def test_empty_complex():
    p = parse_network("0 <-> A").single_pair()
    assert p.alpha == (0,) and p.beta == (1,)


def test_two_irreversible_lines_merge():
    net = parse_network("A + 2B -> B + C ; kf=3\nB + C -> A + 2B ; kf=0.5")
    p = net.single_pair()
    assert p.alpha == (1, 2, 0)
    assert (p.k_fwd, p.k_bwd) == (3.0, 0.5)


def test_multiple_pairs_and_diffusion():
    net = parse_network("A <-> B\nB <-> C", diffusion={"B": 0.1})
    assert len(net.pairs) == 2
    assert list(net.diffusion) == [1.0, 0.1, 1.0]
    with pytest.raises(ValueError):
        net.single_pair()


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("A <-> A", 1, 1),
        ("A + <-> B", 1, 5),
        ("A <-> B ; kf=-1", 1, 14),
        ("A <-> B ; kq=1", 1, 11),
        ("A -> B", 1, 1),
        ("A -> B ; kr=2", 1, 10),
        ("1.5A <-> B", 1, 1),
        ("A <-> B\nA $ B", 2, 3),
        ("# nothing", 1, 1),
    ],
)
def test_syntax_errors_carry_location(text, line, col):
    with pytest.raises(NetworkSyntaxError) as info:
        parse_network(text)
    assert (info.value.line, info.value.column) == (line, col)


def test_degenerate_pair_rejected():
    with pytest.raises(ValueError):
        ReversiblePair((1, 0), (1, 0))


def test_unknown_diffusion_species(abc):
    with pytest.raises(KeyError):
        abc.with_diffusion({"Q": 1.0})


@st.composite
def networks_text(draw):
    n = draw(st.integers(1, 4))
    names = NAMES[:n]
    lines = []
    for _ in range(draw(st.integers(1, 3))):
        alpha = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
        beta = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
        if alpha == beta:
            beta[0] += 1
        kf = draw(st.sampled_from([1.0, 0.5, 2.0, 1e-3, 12.75]))
        kr = draw(st.sampled_from([1.0, 3.0, 0.125]))

        def cx(c):
            terms = [f"{k}{s}" if k != 1 else s for s, k in zip(names, c) if k]
            return " + ".join(terms) or "0"

        lines.append(f"{cx(alpha)} <-> {cx(beta)} ; kf={kf}, kr={kr}")
    return "\n".join(lines)


@settings(max_examples=150, deadline=None)
@given(networks_text())
def test_format_parse_roundtrip(text):
    net = parse_network(text)
    canon = format_network(net)
    again = parse_network(canon)
    assert format_network(again) == canon
    assert again.pairs == net.pairs
    assert again.names == net.names


# ---------------------------------------------------------------- kinetics


def test_rate_examples(abc):
    assert np.array_equal(mass_action_rate(abc, [1, 1, 1]), [0, 0, 0])
    assert np.array_equal(mass_action_rate(abc, [2, 1, 1]), [-1, -1, 1])
    assert np.array_equal(mass_action_rate(abc, [0, 0, 0]), [0, 0, 0])


def test_zero_power_convention():
    assert monomial(np.array([0.0, 3.0]), (0, 2)) == 9.0
    assert monomial(np.array([0.0, 0.0]), (0, 0)) == 1.0
    net = parse_network("0 <-> A")
    assert np.array_equal(mass_action_rate(net, [0.0]), [1.0])


def test_negative_state_rejected(abc):
    with pytest.raises(ValueError):
        mass_action_rate(abc, [1.0, -1e-6, 1.0])


def test_boundary_jacobian_entry(abc):
    J = rate_jacobian(abc, [1.0, 0.0, 2.0])
    assert J[1, 1] == 2.0
    assert np.allclose(J, symbolic_jacobian((1, 2, 0), (0, 1, 1), (1.0, 0.0, 2.0)), atol=0)


def test_jacobian_vanishes_with_every_monomial():
    net = parse_network("2A + B <-> A + 2C")
    J = rate_jacobian(net, [0.0, 1.0, 0.0])
    assert np.array_equal(J, np.zeros((3, 3)))


@st.composite
def pair_and_state(draw):
    n = draw(st.integers(1, 4))
    alpha = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    beta = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    if alpha == beta:
        beta[-1] += 1
    kf = draw(st.floats(0.1, 5.0))
    kr = draw(st.floats(0.1, 5.0))
    u = draw(st.lists(st.floats(0.2, 3.0), min_size=n, max_size=n))
    return alpha, beta, kf, kr, np.array(u)


def _single(alpha, beta, kf, kr):
    from crnlab.network import ReactionNetwork, Species

    species = tuple(Species(NAMES[i], i) for i in range(len(alpha)))
    return ReactionNetwork(species, (ReversiblePair(tuple(alpha), tuple(beta), kf, kr),))


@settings(max_examples=100, deadline=None)
@given(pair_and_state())
def test_jacobian_matches_central_differences(case):
    alpha, beta, kf, kr, u = case
    net = _single(alpha, beta, kf, kr)
    J = rate_jacobian(net, u)
    h = 1e-6
    fd = np.empty_like(J)
    for j in range(len(u)):
        e = np.zeros_like(u)
        e[j] = h
        fd[:, j] = (mass_action_rate(net, u + e) - mass_action_rate(net, u - e)) / (2 * h)
    scale = np.max(np.abs(J)) + 1.0
    assert np.max(np.abs(J - fd)) <= 1e-6 * scale


@settings(max_examples=40, deadline=None)
@given(pair_and_state())
def test_jacobian_matches_symbolic(case):
    alpha, beta, kf, kr, u = case
    J = rate_jacobian(_single(alpha, beta, kf, kr), u)
    assert np.allclose(J, symbolic_jacobian(alpha, beta, u, kf, kr), rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- conservation


def test_basis_abc(abc):
    assert conservation_basis(abc).tolist() == [[1, 0, 1], [0, 1, 1]]


def test_basis_isomerization():
    assert conservation_basis(parse_network("A <-> B")).tolist() == [[1, 1]]


def test_basis_empty_when_full_rank():
    assert conservation_basis(parse_network("0 <-> A")).shape == (0, 1)


@settings(max_examples=100, deadline=None)
@given(networks_text(), st.data())
def test_basis_annihilates_rates(text, data):
    net = parse_network(text)
    basis = conservation_basis(net)
    assert np.array_equal(basis @ net.stoichiometric_matrix(), np.zeros((basis.shape[0], len(net.pairs)), dtype=int))
    u = np.array(data.draw(st.lists(st.floats(0.0, 4.0), min_size=net.n_species, max_size=net.n_species)))
    R = mass_action_rate(net, u)
    assert np.max(np.abs(basis @ R), initial=0.0) <= 1e-12 * (1.0 + np.max(np.abs(R)))


@settings(max_examples=60, deadline=None)
@given(networks_text())
def test_basis_rows_are_canonical(text):
    basis = conservation_basis(parse_network(text))
    for row in basis:
        nz = row[row != 0]
        assert nz[0] > 0
        assert np.gcd.reduce(np.abs(nz)) == 1


@settings(max_examples=100, deadline=None)
@given(pair_and_state())
def test_index_set_invariant(case):
    alpha, beta, *_ = case
    s = IndexSets.from_pair(ReversiblePair(tuple(alpha), tuple(beta)))
    for i in s.L:
        assert s.gamma[i] == beta[i]
    for j in s.R:
        assert s.gamma[j] == alpha[j]
    assert s.L.isdisjoint(s.R)
    assert s.L <= s.L0 and s.R <= s.R0


# ---------------------------------------------------------------- complex balance


def test_complex_balance(abc):
    assert is_complex_balanced(abc, [1.0, 1.0, 1.0])
    assert not is_complex_balanced(abc, [2.0, 1.0, 1.0])
    net = parse_network("2A <-> B")
    assert is_complex_balanced(net, [2.0, 4.0])
