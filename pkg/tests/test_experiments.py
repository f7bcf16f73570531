import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnlab.equilibria import class_of, positive_equilibrium
from crnlab.experiments import (
    default_instability_shape,
    default_stability_shape,
    is_in_class,
    non_increasing,
    project_in_class,
    run_instability_experiment,
    run_stability_experiment,
    unstable_boundary_equilibrium,
)
from crnlab.grid import BoxDomain
from crnlab.network import conservation_basis, parse_network
from crnlab.simulator import FieldSet, SimConfig


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_lands_in_class(seed):
    net = parse_network("A + 2B <-> B + C")
    d = BoxDomain.unit(8)
    dev = np.random.default_rng(seed).standard_normal((3, 8))
    p = project_in_class(net, FieldSet(d, np.ones(3), dev))
    assert is_in_class(net, p)
    basis = conservation_basis(net)
    assert np.max(np.abs(basis @ d.mean(p.dev))) <= 1e-13
    # only the mean changes
    assert np.allclose(p.dev - d.mean(p.dev)[:, None], dev - d.mean(dev)[:, None], atol=1e-14)


def test_default_shapes(abc, abc_class):
    d = BoxDomain.unit(8)
    eq = unstable_boundary_equilibrium(abc, abc_class)
    shape = default_instability_shape(abc, eq, d)
    assert np.all(shape.dev[1] > 0)
    assert is_in_class(abc, shape)
    stab = default_stability_shape(abc, d)
    assert np.all(d.mean(stab.dev) == pytest.approx(0.0, abs=1e-15))


def test_non_increasing():
    assert non_increasing([3.0, 2.0, 2.0, 1.0])
    assert non_increasing([1.0, 1.0 + 1e-11])
    assert not non_increasing([1.0, 1.0 + 1e-9])


def test_instability_small_grid(abc, abc_class):
    d = BoxDomain.unit(16)
    r = run_instability_experiment(abc, abc_class, None, 1e-4, 0.05, SimConfig(dt=2e-3, t_end=4.0), domain=d)
    assert r.escaped
    assert abs(r.fitted_rate - 2.0) <= 0.1
    assert abs(r.measured_escape / r.predicted_escape - 1) <= 0.15
    assert r.tau0_proxy >= r.theta0
    assert np.max(np.abs(r.trajectory.diagnostics.theta_mean)) <= 1e-11


def test_instability_without_perturbation(abc, abc_class):
    d = BoxDomain.unit(8)
    r = run_instability_experiment(abc, abc_class, None, 0.0, 0.05, SimConfig(dt=1e-2, t_end=2.0), domain=d)
    assert not r.escaped
    assert math.isinf(r.predicted_escape)
    final = r.trajectory.final
    assert np.max(np.abs(final.values - np.array([1.0, 0.0, 2.0])[:, None])) <= 1e-14


def test_instability_argument_checks(abc, abc_class):
    with pytest.raises(ValueError):
        run_instability_experiment(abc, abc_class, None, 0.1, 0.05, SimConfig())
    # shape without mass of the vanished species
    d = BoxDomain.unit(8)
    shape = FieldSet(d, np.zeros(3), np.stack([np.zeros(8), -np.ones(8), np.zeros(8)]))
    with pytest.raises(ValueError):
        run_instability_experiment(abc, abc_class, shape, 1e-4, 0.05, SimConfig(), domain=d)


def test_stability_zero_perturbation(abc, abc_class):
    d = BoxDomain.unit(8)
    r = run_stability_experiment(abc, abc_class, FieldSet(d, np.zeros(3), np.zeros((3, 8))), SimConfig(dt=1e-2, t_end=1.0))
    assert r.degenerate
    assert math.isnan(r.fitted_decay)
    assert np.all(r.trajectory.diagnostics.energy == 0.0)


def test_stability_checks(abc, abc_class):
    d = BoxDomain.unit(8)
    big = default_stability_shape(abc, d)
    with pytest.raises(ValueError, match="exceeds theta"):
        run_stability_experiment(abc, abc_class, FieldSet(d, big.base, 0.5 * big.dev), SimConfig(), theta=0.1)
    shifted = FieldSet(d, big.base, 0.01 * big.dev + 0.01)
    with pytest.raises(ValueError, match="conserved"):
        run_stability_experiment(abc, abc_class, shifted, SimConfig())


def test_stability_small_grid(abc, abc_class):
    d = BoxDomain.unit(16)
    shape = default_stability_shape(abc, d)
    r = run_stability_experiment(abc, abc_class, FieldSet(d, shape.base, 1e-2 * shape.dev), SimConfig(dt=1e-2, t_end=5.0))
    assert r.energy_monotone and r.rate_energy_monotone
    assert r.fitted_decay > 0
    assert r.h2_ratio <= 0.1


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([("A + 2B <-> B + C", (2.0, 1.0, 1.0)), ("A + 2B <-> 3C", (1.0, 1.0, 1.0))]), st.integers(0, 2**32 - 1))
def test_unweighted_norm_sums_non_increasing(case, seed):
    text, u = case
    net = parse_network(text)
    d = BoxDomain.unit(16)
    cls = class_of(net, u)
    eq = positive_equilibrium(net, cls)
    rng = np.random.default_rng(seed)
    dev = 0.3 * rng.standard_normal((3, 1))
    for k in range(1, 5):
        dev = dev + rng.standard_normal((3, 1)) * d.cosine_mode((k,)) / k**2
    pert = project_in_class(net, FieldSet(d, eq.value, 1e-2 * dev))
    diag = run_stability_experiment(net, cls, pert, SimConfig(dt=1e-3, t_end=1.0, record_every=1)).trajectory.diagnostics
    for sums in (diag.l2_dev.sum(axis=1), diag.rate_l2.sum(axis=1)):
        assert np.all(np.diff(sums) <= 1e-10 * sums[:-1])
