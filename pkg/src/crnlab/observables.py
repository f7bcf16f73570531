"""Energies, zero-mean combinations and norms of deviation fields.

Functions take a :class:`~crnlab.simulator.FieldSet` whose ``dev`` holds the
deviation from the reference state and whose ``rates`` hold ``du/dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibria import Equilibrium
from .grid import ScalarField
from .network import ReactionNetwork, monomial


@dataclass(frozen=True)
class EnergyWeights:
    w: np.ndarray


def energy_weights(net: ReactionNetwork, eq: Equilibrium) -> EnergyWeights:
    """Per-species weights that make the quadratic energy a Lyapunov function.

    Consumed species get ``(a_i - g_i)/(a_i - b_i) * u^(a-g) / u_i``, produced
    species ``(b_j - g_j)/(b_j - a_j) * u^(b-g) / u_j`` with ``g = min(a, b)``.
    Species with equal coefficients on both sides only diffuse and get weight 1.
    """
    if eq.kind != "positive":
        raise ValueError("energy weights are defined at a positive equilibrium only")
    pair = net.single_pair()
    sets = net.index_sets()
    u = np.asarray(eq.value, dtype=float)
    alpha = np.asarray(pair.alpha)
    beta = np.asarray(pair.beta)
    gamma = np.asarray(sets.gamma)
    lhs = monomial(u, alpha - gamma)
    rhs = monomial(u, beta - gamma)
    w = np.ones(net.n_species)
    for i in sets.L:
        w[i] = (alpha[i] - gamma[i]) / (alpha[i] - beta[i]) * lhs / u[i]
    for j in sets.R:
        w[j] = (beta[j] - gamma[j]) / (beta[j] - alpha[j]) * rhs / u[j]
    return EnergyWeights(w)


def weighted_square_sum(domain, weights: np.ndarray, fields: np.ndarray) -> float:
    return float(np.sum(weights * domain.l2(fields) ** 2))


def weighted_energy(net: ReactionNetwork, eq: Equilibrium, dev) -> float:
    """``sum_i w_i ||dev_i||_2^2`` with :func:`energy_weights`."""
    w = energy_weights(net, eq).w
    return weighted_square_sum(dev.domain, w, dev.dev)


def rate_energy(net: ReactionNetwork, eq: Equilibrium, dev) -> float:
    """Same weighted energy applied to the time-derivative fields."""
    if dev.rates is None:
        raise ValueError("field set carries no time derivatives")
    w = energy_weights(net, eq).w
    return weighted_square_sum(dev.domain, w, dev.rates)


def theta_coefficients(net: ReactionNetwork, l: int, k: int) -> np.ndarray:
    sets = net.index_sets()
    if l not in sets.L or k not in sets.R:
        raise ValueError(f"theta needs l in L={sorted(sets.L)} and k in R={sorted(sets.R)}, got ({l}, {k})")
    pair = net.single_pair()
    c = np.zeros(net.n_species)
    c[l] = 1.0 / (pair.alpha[l] - pair.beta[l])
    c[k] = 1.0 / (pair.beta[k] - pair.alpha[k])
    return c


def theta_pairs(net: ReactionNetwork) -> list[tuple[int, int]]:
    sets = net.index_sets()
    return [(l, k) for l in sorted(sets.L) for k in sorted(sets.R)]


def combine(coeffs: np.ndarray, fields: np.ndarray) -> np.ndarray:
    return np.tensordot(coeffs, fields, axes=(0, 0))


def theta_observable(net: ReactionNetwork, l: int, k: int, dev) -> ScalarField:
    """``dev_l / (a_l - b_l) + dev_k / (b_k - a_k)``; zero-mean along in-class motion."""
    return ScalarField(dev.domain, combine(theta_coefficients(net, l, k), dev.dev))


def theta_rate_observable(net: ReactionNetwork, l: int, k: int, dev) -> ScalarField:
    if dev.rates is None:
        raise ValueError("field set carries no time derivatives")
    return ScalarField(dev.domain, combine(theta_coefficients(net, l, k), dev.rates))


def triple_norm(dev) -> float:
    """``sum_i ||dev_i||_H2 + sum_i ||du_i/dt||_2``."""
    if dev.rates is None:
        raise ValueError("triple norm needs time-derivative fields")
    d = dev.domain
    return float(np.sum(d.h2(dev.dev)) + np.sum(d.l2(dev.rates)))


def y_norm(dev) -> float:
    """``||u||_2 + ||u_t||_2`` with vector L2 norms over all species."""
    if dev.rates is None:
        raise ValueError("norm needs time-derivative fields")
    d = dev.domain
    return float(np.sqrt(np.sum(d.l2(dev.dev) ** 2)) + np.sqrt(np.sum(d.l2(dev.rates) ** 2)))
