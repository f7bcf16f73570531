"""Stoichiometric classes and constant equilibria of a single reversible pair."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import linprog

from .network import ReactionNetwork, conservation_basis, mass_action_rate, rate_jacobian

ROOT_TOL = 1e-13
RATE_TOL = 1e-12
CLASS_TOL = 1e-10


class NoEquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class StoichiometricClass:
    """Conserved totals ``basis @ u``; ``degenerate`` when no strictly positive state has them."""

    totals: np.ndarray
    basis: np.ndarray
    degenerate: bool = False

    def contains(self, u, tol: float = CLASS_TOL) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(np.abs(self.basis @ u - self.totals) <= tol * (1.0 + np.abs(self.totals))))


@dataclass(frozen=True)
class Equilibrium:
    """Constant steady state ``value``.

    ``growth_rate`` is the largest real part of the reaction Jacobian restricted
    to the stoichiometric subspace, i.e. the growth rate of spatially uniform
    in-class perturbations.
    """

    value: np.ndarray
    kind: Literal["positive", "boundary"]
    growth_rate: float
    degenerate: bool = False

    @property
    def zero_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.value == 0.0))


def class_of(net: ReactionNetwork, u0_mean) -> StoichiometricClass:
    u0 = np.asarray(u0_mean, dtype=float)
    if u0.shape != (net.n_species,):
        raise ValueError(f"expected {net.n_species} mean concentrations, got shape {u0.shape}")
    if np.any(u0 < 0):
        raise ValueError(f"mean concentrations must be nonnegative, got {u0}")
    basis = conservation_basis(net)
    totals = basis @ u0
    return StoichiometricClass(totals=totals, basis=basis, degenerate=not _has_positive_point(basis, totals))


def _has_positive_point(basis: np.ndarray, totals: np.ndarray) -> bool:
    """Whether some ``u > 0`` has ``basis @ u = totals``: maximize ``t`` with ``u >= t``."""
    m, n = basis.shape
    if m == 0:
        return True
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    a_eq = np.hstack([basis.astype(float), np.zeros((m, 1))])
    res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=totals,
                  bounds=[(0, None)] * n + [(0, 1)], method="highs")
    return bool(res.status == 0 and -res.fun > CLASS_TOL)


def _class_point(net: ReactionNetwork, cls: StoichiometricClass) -> np.ndarray:
    """Least-norm point ``x`` with ``basis @ x = totals``."""
    if cls.basis.shape[0] == 0:
        return np.zeros(net.n_species)
    x, *_ = np.linalg.lstsq(cls.basis.astype(float), cls.totals, rcond=None)
    return x


def _positive_interval(anchor: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
    """Open interval of ``s`` keeping ``anchor + s * direction`` strictly positive."""
    lo, hi = -math.inf, math.inf
    for x, d in zip(anchor, direction):
        if d > 0:
            lo = max(lo, -x / d)
        elif d < 0:
            hi = min(hi, x / -d)
        elif x <= 0:
            return math.nan, math.nan
    return lo, hi


def positive_anchor(net: ReactionNetwork, cls: StoichiometricClass) -> np.ndarray:
    """A strictly positive point of the class, or :class:`NoEquilibriumError`."""
    pair = net.single_pair()
    x0 = _class_point(net, cls)
    direction = pair.reaction_vector.astype(float)
    lo, hi = _positive_interval(x0, direction)
    if not lo < hi:
        raise NoEquilibriumError(f"class with totals {cls.totals} has no strictly positive point")
    if math.isinf(lo) and math.isinf(hi):
        s = 0.0
    elif math.isinf(lo):
        s = hi - 1.0
    elif math.isinf(hi):
        s = lo + 1.0
    else:
        s = 0.5 * (lo + hi)
    return x0 + s * direction


def log_rate_gap(net: ReactionNetwork, anchor: np.ndarray, s: float) -> float:
    """``log(kf u^alpha) - log(kr u^beta)`` at ``u = anchor + s (beta - alpha)``."""
    pair = net.single_pair()
    alpha = np.asarray(pair.alpha, dtype=float)
    beta = np.asarray(pair.beta, dtype=float)
    u = anchor + s * (beta - alpha)
    mask = alpha != beta
    return math.log(pair.k_fwd) - math.log(pair.k_bwd) + float(np.sum((alpha - beta)[mask] * np.log(u[mask])))


def _log_rate_slope(net: ReactionNetwork, anchor: np.ndarray, s: float) -> float:
    pair = net.single_pair()
    d = pair.reaction_vector.astype(float)
    u = anchor + s * d
    mask = d != 0
    return -float(np.sum(d[mask] ** 2 / u[mask]))


def _solve_along_segment(net, anchor, lo, hi) -> float:
    g = lambda s: log_rate_gap(net, anchor, s)  # noqa: E731
    # the gap is strictly decreasing, +inf at lo and -inf at hi (when finite)
    a = lo if math.isfinite(lo) else None
    b = hi if math.isfinite(hi) else None
    step = 1.0
    if a is None:
        a = (b if b is not None else 0.0) - step
        while g(a) < 0:
            step *= 2
            a -= step
            if step > 1e300:
                raise NoEquilibriumError("gap stays negative along the class")
    if b is None:
        b = a + 1.0
        step = 1.0
        while g(b) > 0:
            step *= 2
            b += step
            if step > 1e300:
                raise NoEquilibriumError("gap stays positive along the class")
    # bisection never evaluates the open endpoints themselves
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        with np.errstate(divide="ignore"):
            gm = g(mid)
        if gm == 0:
            return mid
        if gm > 0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-6 * (1.0 + abs(mid)):
            break
    s = 0.5 * (a + b)
    for _ in range(100):
        gs = g(s)
        if abs(gs) <= ROOT_TOL:
            return s
        if gs > 0:
            a = s
        else:
            b = s
        s_next = s - gs / _log_rate_slope(net, anchor, s)
        if not a < s_next < b:
            s_next = 0.5 * (a + b)
        if s_next in (a, b):
            break
        s = s_next
    # the bracket has shrunk to adjacent floats; keep whichever end is closer
    with np.errstate(divide="ignore"):
        s = min((a, b), key=lambda x: abs(g(x)))
        if abs(g(s)) > ROOT_TOL:
            raise NoEquilibriumError(f"root refinement stalled at |g| = {abs(g(s)):.3e}")
    return s


def stoichiometric_growth_rate(net: ReactionNetwork, u) -> float:
    """Spectral abscissa of the Jacobian restricted to the range of the stoichiometric matrix."""
    J = rate_jacobian(net, u)
    S = net.stoichiometric_matrix().astype(float)
    q, r = np.linalg.qr(S)
    rank = int(np.sum(np.abs(np.diag(r)) > 1e-12))
    q = q[:, :rank]
    return float(np.max(np.linalg.eigvals(q.T @ J @ q).real))


def positive_equilibrium(net: ReactionNetwork, cls: StoichiometricClass, anchor=None) -> Equilibrium:
    """The unique strictly positive equilibrium of ``cls``.

    The class meets the positive orthant in the segment
    ``anchor + s (beta - alpha)``; the log-rate gap is strictly decreasing on it,
    so its root is bracketed, bisected and polished by Newton.
    """
    pair = net.single_pair()
    anchor = positive_anchor(net, cls) if anchor is None else np.asarray(anchor, dtype=float)
    if anchor.shape != (net.n_species,) or not np.all(anchor > 0):
        raise ValueError(f"anchor must be a strictly positive vector of length {net.n_species}")
    if not cls.contains(anchor):
        raise ValueError(f"anchor {anchor} is not in the class with totals {cls.totals}")
    lo, hi = _positive_interval(anchor, pair.reaction_vector.astype(float))
    s = _solve_along_segment(net, anchor, lo, hi)
    value = anchor + s * pair.reaction_vector
    if not np.all(value > 0):
        raise NoEquilibriumError(f"root {value} left the positive orthant")
    return Equilibrium(value=value, kind="positive", growth_rate=stoichiometric_growth_rate(net, value))


def boundary_equilibria(net: ReactionNetwork, cls: StoichiometricClass) -> list[Equilibrium]:
    """Equilibria of ``cls`` with at least one zero coordinate.

    Candidate zero sets are single species of ``L0 & R0`` and pairs from
    ``L0 x R0``; each is solved against the class constraints and kept when the
    solution is nonnegative, in class and at rest. An equilibrium with more
    than one zero coordinate is flagged ``degenerate``.
    """
    sets = net.index_sets()
    n = net.n_species
    candidates = [(i,) for i in sorted(sets.L0 & sets.R0)]
    candidates += [tuple(sorted({i, j})) for i, j in itertools.product(sorted(sets.L0), sorted(sets.R0))]
    basis = cls.basis.astype(float)
    found: list[np.ndarray] = []
    for zeros in dict.fromkeys(candidates):
        pins = np.zeros((len(zeros), n))
        for row, i in enumerate(zeros):
            pins[row, i] = 1.0
        A = np.vstack([basis, pins])
        rhs = np.concatenate([cls.totals, np.zeros(len(zeros))])
        if np.linalg.matrix_rank(A) < n:
            continue
        u, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.max(np.abs(A @ u - rhs), initial=0.0) > CLASS_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0)):
            continue
        u[np.abs(u) <= CLASS_TOL * (1.0 + np.max(np.abs(u)))] = 0.0
        u[list(zeros)] = 0.0
        if np.any(u < 0):
            continue
        if np.max(np.abs(mass_action_rate(net, u))) > RATE_TOL:
            continue
        if any(np.allclose(u, v, rtol=0, atol=CLASS_TOL) for v in found):
            continue
        found.append(u)
    out = []
    for u in found:
        out.append(
            Equilibrium(
                value=u,
                kind="boundary",
                growth_rate=stoichiometric_growth_rate(net, u),
                degenerate=int(np.sum(u == 0.0)) > 1,
            )
        )
    return out


def boundary_growth_rate(net: ReactionNetwork, eq: Equilibrium) -> float:
    """Spectral abscissa of the reaction Jacobian at a boundary equilibrium."""
    if eq.kind != "boundary":
        raise ValueError("boundary_growth_rate needs a boundary equilibrium")
    return float(np.max(np.linalg.eigvals(rate_jacobian(net, eq.value)).real))


def all_equilibria(net: ReactionNetwork, cls: StoichiometricClass) -> list[Equilibrium]:
    out = []
    try:
        out.append(positive_equilibrium(net, cls))
    except NoEquilibriumError:
        pass
    return out + boundary_equilibria(net, cls)
