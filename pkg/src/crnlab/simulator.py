"""Time integration of Neumann reaction-diffusion systems on box grids.

States are stored as a constant species vector ``base`` plus deviation fields
``dev``. When ``base`` is an equilibrium the reaction term is evaluated as an
increment about it, so deviations keep full relative precision as they decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np
import scipy.linalg

from . import observables as obs
from .equilibria import Equilibrium
from .grid import BoxDomain, ScalarField
from .network import ReactionNetwork, conservation_basis, rate_jacobian, reaction_field

SCHEMES = ("strang", "explicit-rk4")
RK4_SAFETY = 0.9


class SimulationError(RuntimeError):
    pass


class NonFiniteError(SimulationError):
    pass


class NegativityBreach(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: Literal["strang", "explicit-rk4"] = "strang"
    record_every: int = 1
    negativity_tol: float = 1e-10

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")
        if not self.negativity_tol >= 0:
            raise ValueError("negativity_tol must be nonnegative")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    def check_stability(self, net: ReactionNetwork, domain: BoxDomain) -> None:
        if self.scheme != "explicit-rk4":
            return
        dmax = float(np.max(net.diffusion))
        if dmax == 0:
            return
        limit = RK4_SAFETY * min(domain.spacing) ** 2 / (2.0 * dmax * domain.dim)
        if self.dt > limit:
            raise ValueError(f"explicit-rk4 needs dt <= {limit:.3e} on this grid, got {self.dt}")


@dataclass(frozen=True)
class FieldSet:
    """Species fields ``base + dev`` on one domain, with optional ``du/dt``."""

    domain: BoxDomain
    base: np.ndarray
    dev: np.ndarray
    time: float = 0.0
    rates: Optional[np.ndarray] = None

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).reshape(-1)
        dev = np.asarray(self.dev, dtype=float)
        if dev.shape != (base.size,) + self.domain.shape:
            raise ValueError(f"dev has shape {dev.shape}, expected {(base.size,) + self.domain.shape}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "dev", dev)
        if self.rates is not None:
            object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float).reshape(dev.shape))

    @classmethod
    def from_values(cls, domain: BoxDomain, values, time: float = 0.0) -> "FieldSet":
        values = np.asarray(values, dtype=float)
        return cls(domain, np.zeros(values.shape[0]), values, time)

    @classmethod
    def uniform(cls, domain: BoxDomain, u) -> "FieldSet":
        u = np.asarray(u, dtype=float)
        return cls(domain, u, np.zeros((u.size,) + domain.shape))

    @property
    def n_species(self) -> int:
        return self.base.size

    @property
    def values(self) -> np.ndarray:
        return self._expand(self.base) + self.dev

    def _expand(self, vec):
        return np.asarray(vec, dtype=float).reshape((-1,) + (1,) * self.domain.dim)

    def field(self, i: int) -> ScalarField:
        return ScalarField(self.domain, self.values[i])

    def rate_field(self, i: int) -> ScalarField:
        if self.rates is None:
            raise ValueError("field set carries no time derivatives")
        return ScalarField(self.domain, self.rates[i])

    def mean(self) -> np.ndarray:
        return self.base + self.domain.mean(self.dev)

    def recentred(self, reference) -> "FieldSet":
        """Same state expressed as deviation from ``reference``."""
        ref = np.asarray(reference, dtype=float)
        if np.array_equal(ref, self.base):
            return self
        dev = self._expand(self.base - ref) + self.dev
        return replace(self, base=ref, dev=dev, rates=self.rates)


@dataclass
class DiagnosticsSeries:
    """Recorded time series; per-species arrays have shape ``(samples, species)``."""

    species: list[str]
    total_names: list[str]
    theta_labels: list[str]
    t: np.ndarray
    l2_dev: np.ndarray
    h2_dev: np.ndarray
    linf_dev: np.ndarray
    mean: np.ndarray
    rate_l2: np.ndarray
    totals: np.ndarray
    energy: np.ndarray
    rate_energy: np.ndarray
    triple_norm: np.ndarray
    y_norm: np.ndarray
    theta_mean: np.ndarray
    theta_rate_mean: np.ndarray
    measure: float = 1.0

    @property
    def h2_sum(self) -> np.ndarray:
        return np.sum(self.h2_dev, axis=1)

    def integral(self, species: int) -> np.ndarray:
        return self.mean[:, species] * self.measure


@dataclass
class Trajectory:
    diagnostics: DiagnosticsSeries
    final: FieldSet
    samples: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.diagnostics.t


class _Recorder:
    def __init__(self, net: ReactionNetwork, domain: BoxDomain, reference: Optional[Equilibrium]):
        self.net = net
        self.domain = domain
        self.basis = conservation_basis(net)
        self.weights = None
        self.thetas: list[tuple[str, np.ndarray]] = []
        if reference is not None and len(net.pairs) == 1:
            if reference.kind == "positive":
                self.weights = obs.energy_weights(net, reference).w
            names = net.names
            for l, k in obs.theta_pairs(net):
                self.thetas.append((f"{names[l]}_{names[k]}", obs.theta_coefficients(net, l, k)))
        self.rows: dict[str, list] = {
            k: []
            for k in (
                "t l2_dev h2_dev linf_dev mean rate_l2 totals energy rate_energy triple_norm y_norm theta_mean theta_rate_mean"
            ).split()
        }

    def record(self, state: FieldSet) -> None:
        d = self.domain
        dev, rates = state.dev, state.rates
        r = self.rows
        r["t"].append(state.time)
        r["l2_dev"].append(d.l2(dev))
        h2 = d.h2(dev)
        r["h2_dev"].append(h2)
        r["linf_dev"].append(d.linf(dev))
        mean = state.mean()
        r["mean"].append(mean)
        r["totals"].append(self.basis @ mean)
        l2_rates = d.l2(rates)
        r["rate_l2"].append(l2_rates)
        if self.weights is not None:
            r["energy"].append(float(np.sum(self.weights * r["l2_dev"][-1] ** 2)))
            r["rate_energy"].append(float(np.sum(self.weights * l2_rates**2)))
        else:
            r["energy"].append(math.nan)
            r["rate_energy"].append(math.nan)
        r["triple_norm"].append(float(np.sum(h2) + np.sum(l2_rates)))
        r["y_norm"].append(float(np.sqrt(np.sum(r["l2_dev"][-1] ** 2)) + np.sqrt(np.sum(l2_rates**2))))
        r["theta_mean"].append([float(d.mean(obs.combine(c, dev))) for _, c in self.thetas])
        r["theta_rate_mean"].append([float(d.mean(obs.combine(c, rates))) for _, c in self.thetas])

    def series(self) -> DiagnosticsSeries:
        r = self.rows
        m = len(r["t"])
        n_theta = len(self.thetas)
        return DiagnosticsSeries(
            species=self.net.names,
            total_names=[f"M{i + 1}" for i in range(self.basis.shape[0])],
            theta_labels=[label for label, _ in self.thetas],
            t=np.array(r["t"]),
            l2_dev=np.array(r["l2_dev"]).reshape(m, -1),
            h2_dev=np.array(r["h2_dev"]).reshape(m, -1),
            linf_dev=np.array(r["linf_dev"]).reshape(m, -1),
            mean=np.array(r["mean"]).reshape(m, -1),
            rate_l2=np.array(r["rate_l2"]).reshape(m, -1),
            totals=np.array(r["totals"]).reshape(m, self.basis.shape[0]),
            energy=np.array(r["energy"]),
            rate_energy=np.array(r["rate_energy"]),
            triple_norm=np.array(r["triple_norm"]),
            y_norm=np.array(r["y_norm"]),
            theta_mean=np.array(r["theta_mean"]).reshape(m, n_theta),
            theta_rate_mean=np.array(r["theta_rate_mean"]).reshape(m, n_theta),
            measure=self.domain.measure,
        )


class _Integrator:
    """Single-step kernels for a fixed network, domain, base and scheme."""

    def __init__(self, net, domain, base, cfg: SimConfig, at_equilibrium: bool, jacobian=None):
        self.net = net
        self.domain = domain
        self.base = np.asarray(base, dtype=float)
        self.cfg = cfg
        self.at_equilibrium = at_equilibrium
        self.jacobian = jacobian
        self.decay = net.diffusion.reshape((-1,) + (1,) * domain.dim) * domain.eigenvalues
        self.diffusion = net.diffusion.reshape((-1,) + (1,) * domain.dim)
        self._cache: dict[float, tuple] = {}

    def reaction(self, dev):
        if self.jacobian is not None:
            return np.tensordot(self.jacobian, dev, axes=(1, 0))
        return reaction_field(self.net, self.base, dev, include_base_rate=not self.at_equilibrium)

    def rhs(self, dev):
        return self.diffusion * self.domain.laplacian(dev) + self.reaction(dev)

    def _factors(self, dt):
        if dt not in self._cache:
            half = np.exp(-0.5 * dt * self.decay)
            expm = scipy.linalg.expm(dt * self.jacobian) if self.jacobian is not None else None
            self._cache[dt] = (half, expm)
        return self._cache[dt]

    def _diffuse(self, dev, factor):
        return self.domain.idct(factor * self.domain.dct(dev))

    def _rk4(self, f, v, dt):
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(self, dev, dt):
        if self.cfg.scheme == "explicit-rk4":
            return self._rk4(self.rhs, dev, dt)
        half, expm = self._factors(dt)
        dev = self._diffuse(dev, half)
        if expm is not None:
            dev = np.tensordot(expm, dev, axes=(1, 0))
        else:
            dev = self._rk4(self.reaction, dev, dt)
        return self._diffuse(dev, half)

    def check(self, dev, t):
        if not np.all(np.isfinite(dev)):
            raise NonFiniteError(f"non-finite values at t={t:.6g}")
        if self.jacobian is None:
            low = float(np.min(dev + self.base.reshape((-1,) + (1,) * self.domain.dim)))
            if low < -self.cfg.negativity_tol:
                raise NegativityBreach(f"concentration {low:.3e} below -{self.cfg.negativity_tol:g} at t={t:.6g}")

    def state(self, dev, t) -> FieldSet:
        return FieldSet(self.domain, self.base, dev, t, self.rhs(dev))


def _prepare(net: ReactionNetwork, u0: FieldSet, reference: Optional[Equilibrium]):
    if u0.n_species != net.n_species:
        raise ValueError(f"initial data has {u0.n_species} species, network has {net.n_species}")
    if reference is not None:
        u0 = u0.recentred(reference.value)
    return u0


def with_rates(net: ReactionNetwork, state: FieldSet, reference: Optional[Equilibrium] = None) -> FieldSet:
    """``state`` with ``rates = D Lap u + R(u)`` evaluated pointwise."""
    state = _prepare(net, state, reference)
    integ = _Integrator(net, state.domain, state.base, SimConfig(), at_equilibrium=reference is not None)
    return integ.state(state.dev, state.time)


def step(net: ReactionNetwork, state: FieldSet, cfg: SimConfig, reference: Optional[Equilibrium] = None) -> FieldSet:
    """Advance ``state`` by one step of ``cfg.dt``; the result carries ``du/dt``."""
    cfg.check_stability(net, state.domain)
    state = _prepare(net, state, reference)
    integ = _Integrator(net, state.domain, state.base, cfg, at_equilibrium=reference is not None)
    t = state.time + cfg.dt
    dev = integ.advance(state.dev, cfg.dt)
    integ.check(dev, t)
    return integ.state(dev, t)


def _run(integ: _Integrator, u0: FieldSet, cfg: SimConfig, recorder: _Recorder, keep_states: bool,
         on_snapshot: Optional[Callable[[int, FieldSet], None]], snapshot_every: int) -> Trajectory:
    # overflow ends up as inf/nan, which the per-step check reports as NonFiniteError
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_steps(integ, u0, cfg, recorder, keep_states, on_snapshot, snapshot_every)


def _run_steps(integ, u0, cfg, recorder, keep_states, on_snapshot, snapshot_every) -> Trajectory:
    n = cfg.n_steps
    dev = u0.dev.copy()
    integ.check(dev, u0.time)
    state = integ.state(dev, u0.time)
    recorder.record(state)
    samples = [state] if keep_states else []
    if on_snapshot is not None and snapshot_every:
        on_snapshot(0, state)
    for i in range(1, n + 1):
        dt = cfg.dt if i < n else cfg.t_end - (n - 1) * cfg.dt
        dev = integ.advance(dev, dt)
        t = u0.time + (cfg.t_end if i == n else i * cfg.dt)
        integ.check(dev, t)
        record = i % cfg.record_every == 0 or i == n
        snap = on_snapshot is not None and snapshot_every and i % snapshot_every == 0
        if record or snap:
            state = integ.state(dev, t)
            if record:
                recorder.record(state)
                if keep_states:
                    samples.append(state)
            if snap:
                on_snapshot(i, state)
    final = integ.state(dev, u0.time + cfg.t_end)
    return Trajectory(diagnostics=recorder.series(), final=final, samples=samples)


def simulate(
    net: ReactionNetwork,
    u0: FieldSet,
    cfg: SimConfig,
    reference: Optional[Equilibrium] = None,
    keep_states: bool = False,
    on_snapshot: Optional[Callable[[int, FieldSet], None]] = None,
    snapshot_every: int = 0,
) -> Trajectory:
    """Integrate the nonlinear system from ``u0`` to ``u0.time + cfg.t_end``.

    With a ``reference`` equilibrium the state is carried as a deviation from
    it, the reference's own (round-off sized) reaction residual is dropped, and
    energies and theta means are recorded.
    """
    cfg.check_stability(net, u0.domain)
    u0 = _prepare(net, u0, reference)
    if np.any(u0.values < 0):
        raise ValueError("initial concentrations must be nonnegative")
    integ = _Integrator(net, u0.domain, u0.base, cfg, at_equilibrium=reference is not None)
    recorder = _Recorder(net, u0.domain, reference)
    return _run(integ, u0, cfg, recorder, keep_states, on_snapshot, snapshot_every)


def simulate_linearized(
    net: ReactionNetwork,
    eq: Equilibrium,
    v0: FieldSet,
    cfg: SimConfig,
    keep_states: bool = False,
) -> Trajectory:
    """Integrate ``v_t = D Lap v + J v`` with ``J`` the Jacobian frozen at ``eq``.

    ``v0.dev`` is the perturbation. Strang steps use exact cosine-space
    diffusion and the matrix exponential of ``J dt`` for the reaction part.
    """
    cfg.check_stability(net, v0.domain)
    if v0.n_species != net.n_species:
        raise ValueError(f"perturbation has {v0.n_species} species, network has {net.n_species}")
    J = rate_jacobian(net, eq.value)
    v0 = FieldSet(v0.domain, eq.value, v0.dev, v0.time)
    integ = _Integrator(net, v0.domain, eq.value, cfg, at_equilibrium=True, jacobian=J)
    recorder = _Recorder(net, v0.domain, eq)
    return _run(integ, v0, cfg, recorder, keep_states, None, 0)
