"""Escape-time runs near boundary equilibria and decay runs near positive ones."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .equilibria import (
    CLASS_TOL,
    Equilibrium,
    NoEquilibriumError,
    StoichiometricClass,
    boundary_equilibria,
    boundary_growth_rate,
    positive_equilibrium,
)
from .fitting import RateFit, fit_exponential_rate
from .grid import BoxDomain
from .network import ReactionNetwork, conservation_basis, rate_jacobian
from .simulator import FieldSet, SimConfig, Trajectory, simulate, with_rates

DEFAULT_DELTA = 1e-4
DEFAULT_THETA0 = 0.05
DEFAULT_AMPLITUDE = 1e-2
DEFAULT_THETA = 1.0
MONOTONE_SLACK = 1e-10
FIT_SKIP_FRACTION = 0.05


@dataclass(frozen=True)
class InstabilityReport:
    delta: float
    theta0: float
    growth_rate: float
    predicted_escape: float
    measured_escape: float
    fitted_rate: float
    tau0_proxy: float
    equilibrium: Equilibrium = field(repr=False)
    fit: Optional[RateFit] = field(default=None, repr=False)
    trajectory: Optional[Trajectory] = field(default=None, repr=False, compare=False)

    @property
    def escaped(self) -> bool:
        return math.isfinite(self.measured_escape)

    def items(self) -> list[tuple[str, float]]:
        return [
            ("delta", self.delta),
            ("theta0", self.theta0),
            ("growth_rate", self.growth_rate),
            ("predicted_escape", self.predicted_escape),
            ("measured_escape", self.measured_escape),
            ("fitted_rate", self.fitted_rate),
            ("tau0_proxy", self.tau0_proxy),
        ]


@dataclass(frozen=True)
class StabilityReport:
    theta: float
    initial_size: float
    fitted_decay: float
    energy_monotone: bool
    rate_energy_monotone: bool
    h2_ratio: float
    degenerate: bool
    h2_series: tuple[np.ndarray, np.ndarray] = field(repr=False)
    equilibrium: Equilibrium = field(repr=False)
    fit: Optional[RateFit] = field(default=None, repr=False)
    trajectory: Optional[Trajectory] = field(default=None, repr=False, compare=False)

    def items(self) -> list[tuple[str, float]]:
        return [
            ("theta", self.theta),
            ("initial_size", self.initial_size),
            ("fitted_decay", self.fitted_decay),
            ("energy_monotone", int(self.energy_monotone)),
            ("rate_energy_monotone", int(self.rate_energy_monotone)),
            ("h2_ratio", self.h2_ratio),
            ("degenerate", int(self.degenerate)),
        ]


def project_in_class(net: ReactionNetwork, dev: FieldSet) -> FieldSet:
    """Remove the part of the spatial mean of ``dev.dev`` that changes conserved totals.

    The mean vector is projected orthogonally onto the kernel of the
    conservation basis, i.e. the stoichiometric subspace.
    """
    basis = conservation_basis(net).astype(float)
    if basis.shape[0] == 0:
        return dev
    d = dev.domain
    mean = d.mean(dev.dev)
    correction = basis.T @ np.linalg.solve(basis @ basis.T, basis @ mean)
    shifted = dev.dev - correction.reshape((-1,) + (1,) * d.dim)
    return FieldSet(d, dev.base, shifted, dev.time)


def is_in_class(net: ReactionNetwork, dev: FieldSet, tol: float = CLASS_TOL) -> bool:
    basis = conservation_basis(net).astype(float)
    return bool(np.all(np.abs(basis @ dev.domain.mean(dev.dev)) <= tol))


def linear_rates(net: ReactionNetwork, eq: Equilibrium, dev: np.ndarray, domain: BoxDomain) -> np.ndarray:
    """``D Lap v + J v`` at ``eq``; the time derivative of the linearized flow."""
    J = rate_jacobian(net, eq.value)
    D = net.diffusion.reshape((-1,) + (1,) * domain.dim)
    return D * domain.laplacian(dev) + np.tensordot(J, dev, axes=(1, 0))


def unstable_boundary_equilibrium(net: ReactionNetwork, cls: StoichiometricClass) -> Equilibrium:
    for eq in boundary_equilibria(net, cls):
        if not eq.degenerate and boundary_growth_rate(net, eq) > 0:
            return eq
    raise NoEquilibriumError(f"class with totals {cls.totals} has no unstable nondegenerate boundary equilibrium")


def default_instability_shape(net: ReactionNetwork, eq: Equilibrium, domain: BoxDomain) -> FieldSet:
    """Uniform shift along the reaction direction that feeds the vanished species."""
    d = net.single_pair().reaction_vector.astype(float)
    zero = eq.zero_set
    if zero and d[zero[0]] < 0:
        d = -d
    dev = np.broadcast_to(d.reshape((-1,) + (1,) * domain.dim), (d.size,) + domain.shape).copy()
    return FieldSet(domain, eq.value, dev)


def default_stability_shape(net: ReactionNetwork, domain: BoxDomain) -> FieldSet:
    """Unit-amplitude first cosine mode along the first axis in every species."""
    k = (1,) + (0,) * (domain.dim - 1)
    mode = domain.cosine_mode(k)
    dev = np.stack([mode] * net.n_species)
    return FieldSet(domain, np.zeros(net.n_species), dev)


def _crossing(t: np.ndarray, y: np.ndarray, level: float) -> tuple[float, float]:
    """First time ``y`` reaches ``level`` (log-interpolated) and the sample value there."""
    hits = np.flatnonzero(y >= level)
    if hits.size == 0:
        return math.nan, math.nan
    i = int(hits[0])
    if i == 0:
        return float(t[0]), float(y[0])
    y0, y1 = y[i - 1], y[i]
    frac = (math.log(level) - math.log(y0)) / (math.log(y1) - math.log(y0)) if y0 > 0 else 1.0
    return float(t[i - 1] + frac * (t[i] - t[i - 1])), float(y[i])


def run_instability_experiment(
    net: ReactionNetwork,
    cls: StoichiometricClass,
    y0_shape: Optional[FieldSet],
    delta: float,
    theta0: float,
    cfg: SimConfig,
    domain: Optional[BoxDomain] = None,
) -> InstabilityReport:
    """Perturb the unstable boundary equilibrium by ``delta * y0`` and time the escape.

    ``y0`` is ``y0_shape`` projected into the class and scaled to
    ``||u0||_2 + ||u_t(0)||_2 = 1`` with ``u_t(0)`` from the linearized flow.
    """
    if delta < 0 or not theta0 > delta:
        raise ValueError(f"need 0 <= delta < theta0, got delta={delta}, theta0={theta0}")
    eq = unstable_boundary_equilibrium(net, cls)
    rate = boundary_growth_rate(net, eq)
    if y0_shape is None:
        y0_shape = default_instability_shape(net, eq, domain or BoxDomain())
    d = y0_shape.domain
    shape = project_in_class(net, y0_shape).dev
    size = np.sqrt(np.sum(d.l2(shape) ** 2)) + np.sqrt(np.sum(d.l2(linear_rates(net, eq, shape, d)) ** 2))
    if not size > 0:
        raise ValueError("perturbation shape is zero after projection into the class")
    shape = shape / size
    for i in eq.zero_set:
        if not d.integral(shape[i]) > 0:
            raise ValueError(f"perturbation must carry positive mass of vanished species {net.names[i]}")
    u0 = FieldSet(d, eq.value, delta * shape)
    if np.any(u0.values < 0):
        raise ValueError("perturbed initial data is negative somewhere; reduce delta or change the shape")

    traj = simulate(net, u0, cfg, reference=eq)
    diag = traj.diagnostics
    predicted = math.log(theta0 / delta) / rate if delta > 0 else math.inf
    measured, tau0 = _crossing(diag.t, diag.y_norm, theta0)

    fit = None
    fitted = math.nan
    horizon = min(x for x in (measured, predicted, diag.t[-1]) if math.isfinite(x))
    if delta > 0 and horizon > 0:
        idx = np.flatnonzero(diag.t <= 0.5 * horizon)
        idx = idx[math.ceil(FIT_SKIP_FRACTION * idx.size):]
        if idx.size >= 5:
            mass = sum(diag.integral(i) for i in eq.zero_set)
            fit = fit_exponential_rate(diag.t[idx], mass[idx], (float(diag.t[idx[0]]), float(diag.t[idx[-1]])))
            fitted = fit.rate
    return InstabilityReport(
        delta=delta,
        theta0=theta0,
        growth_rate=rate,
        predicted_escape=predicted,
        measured_escape=measured,
        fitted_rate=fitted,
        tau0_proxy=tau0,
        equilibrium=eq,
        fit=fit,
        trajectory=traj,
    )


def non_increasing(series: np.ndarray, slack: float = MONOTONE_SLACK) -> bool:
    s = np.asarray(series, dtype=float)
    return bool(np.all(s[1:] <= s[:-1] * (1.0 + slack)))


def run_stability_experiment(
    net: ReactionNetwork,
    cls: StoichiometricClass,
    perturbation: FieldSet,
    cfg: SimConfig,
    theta: float = DEFAULT_THETA,
) -> StabilityReport:
    """Simulate an in-class perturbation of the positive equilibrium and check decay.

    ``perturbation.dev`` is the deviation field. Its initial size
    ``sum_i ||u_t,i||_2 + ||u_i||_inf`` must not exceed ``theta``.
    """
    eq = positive_equilibrium(net, cls)
    d = perturbation.domain
    dev = perturbation.dev
    if not is_in_class(net, perturbation):
        raise ValueError("perturbation changes the conserved totals; project it into the class first")
    u0 = FieldSet(d, eq.value, dev)
    if np.any(u0.values < 0):
        raise ValueError("perturbed initial data is negative somewhere")
    size = float(np.sum(d.l2(with_rates(net, u0, eq).rates)) + np.sum(d.linf(dev)))
    if size > theta:
        raise ValueError(f"initial perturbation size {size:.4g} exceeds theta={theta:g}")
    traj = simulate(net, u0, cfg, reference=eq)
    diag = traj.diagnostics

    h2 = diag.h2_sum
    energy_ok = non_increasing(diag.energy)
    rate_energy_ok = non_increasing(diag.rate_energy)
    degenerate = not np.any(h2 > 0)
    fit = None
    decay = math.nan
    ratio = math.nan
    if not degenerate:
        ratio = float(h2[-1] / h2[0]) if h2[0] > 0 else math.nan
        if np.all(h2 > 0):
            fit = fit_exponential_rate(diag.t, h2)
            decay = -fit.rate
    return StabilityReport(
        theta=theta,
        initial_size=size,
        fitted_decay=decay,
        energy_monotone=energy_ok,
        rate_energy_monotone=rate_energy_ok,
        h2_ratio=ratio,
        degenerate=degenerate,
        h2_series=(diag.t.copy(), h2.copy()),
        equilibrium=eq,
        fit=fit,
        trajectory=traj,
    )
