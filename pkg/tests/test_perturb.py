import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevoforest.perturb import (
    Perturbation,
    apply,
    crossover_perturbations,
    mutate_perturbation,
    sample_uniform,
    zero,
)


def test_apply_zero_is_identity():
    X = np.random.default_rng(0).random((5, 3))
    assert np.array_equal(apply(zero(5, 3, 0.1), X), X)


def test_apply_clamps_to_unit_interval():
    p = Perturbation(deltas=np.array([[0.1]]), epsilon=0.1)
    assert apply(p, np.array([[0.95]]))[0, 0] == 1.0


def test_apply_rejects_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        apply(zero(3, 2, 0.1), np.zeros((4, 2)))


def test_apply_outputs_in_ball_and_domain():
    rng = np.random.default_rng(1)
    for _ in range(200):
        X = rng.random((8, 2))
        p = sample_uniform(8, 2, 0.3, rng)
        z = apply(p, X)
        assert z.min() >= 0.0 and z.max() <= 1.0
        assert np.abs(z - X).max() <= 0.3 + 1e-12


def test_sample_uniform_zero_epsilon():
    p = sample_uniform(4, 2, 0.0, np.random.default_rng(0))
    assert not p.deltas.any()


def test_sample_uniform_mean_near_zero():
    rng = np.random.default_rng(2)
    eps = 0.2
    n = 100_000
    p = sample_uniform(n, 1, eps, rng)
    sigma = eps / np.sqrt(3)  # stdev of U[-eps, eps]
    assert abs(p.deltas.mean()) < 3 * sigma / np.sqrt(n)


def test_sample_uniform_deterministic():
    a = sample_uniform(6, 3, 0.1, np.random.default_rng(5))
    b = sample_uniform(6, 3, 0.1, np.random.default_rng(5))
    assert np.array_equal(a.deltas, b.deltas)


def test_mutate_zero_epsilon_is_identity():
    p = zero(5, 2, 0.0)
    out = mutate_perturbation(p, np.random.default_rng(0))
    assert np.array_equal(out.deltas, p.deltas)


def test_mutate_changes_about_half_the_cells():
    rng = np.random.default_rng(3)
    p = sample_uniform(300, 300, 0.5, rng)
    out = mutate_perturbation(p, rng)
    changed = np.mean(out.deltas != p.deltas)
    assert abs(changed - 0.5) < 0.02


def test_mutate_keeps_ball_invariant_and_input():
    rng = np.random.default_rng(4)
    p = sample_uniform(10, 4, 0.15, rng)
    before = p.deltas.copy()
    out = mutate_perturbation(p, rng)
    assert np.abs(out.deltas).max() <= 0.15
    assert np.array_equal(p.deltas, before)


def test_crossover_equal_parents_returns_parent():
    rng = np.random.default_rng(5)
    p = sample_uniform(6, 2, 0.1, rng)
    c1, c2 = crossover_perturbations(p, p, rng)
    assert np.array_equal(c1.deltas, p.deltas)
    assert np.array_equal(c2.deltas, p.deltas)


def test_crossover_exchanges_rows():
    rng = np.random.default_rng(6)
    p1 = sample_uniform(20, 3, 0.1, rng)
    p2 = sample_uniform(20, 3, 0.1, rng)
    c1, c2 = crossover_perturbations(p1, p2, rng)
    for i in range(20):
        parents = {p1.deltas[i].tobytes(), p2.deltas[i].tobytes()}
        children = {c1.deltas[i].tobytes(), c2.deltas[i].tobytes()}
        assert children == parents


def test_crossover_rejects_mismatch():
    rng = np.random.default_rng(7)
    with pytest.raises(ValueError):
        crossover_perturbations(zero(3, 2, 0.1), zero(4, 2, 0.1), rng)
    with pytest.raises(ValueError):
        crossover_perturbations(zero(3, 2, 0.1), zero(3, 2, 0.2), rng)


def test_operators_clear_reference_cache():
    rng = np.random.default_rng(8)
    p = sample_uniform(5, 2, 0.1, rng)
    p.cached_reference_accuracy = 0.75
    assert mutate_perturbation(p, rng).cached_reference_accuracy is None
    c1, c2 = crossover_perturbations(p, p, rng)
    assert c1.cached_reference_accuracy is None
    assert c2.cached_reference_accuracy is None
    assert p.clone().cached_reference_accuracy is None
    assert p.clone(clear_cache=False).cached_reference_accuracy == 0.75


def test_ball_invariant_enforced_at_construction():
    with pytest.raises(ValueError, match="ball"):
        Perturbation(deltas=np.array([[0.2]]), epsilon=0.1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), eps=st.floats(0.0, 0.5))
def test_pipeline_outputs_stay_feasible(seed, eps):
    rng = np.random.default_rng(seed)
    X = rng.random((6, 2))
    p = sample_uniform(6, 2, eps, rng)
    p = mutate_perturbation(p, rng)
    p, _ = crossover_perturbations(p, sample_uniform(6, 2, eps, rng), rng)
    z = apply(p, X)
    assert np.abs(p.deltas).max() <= eps + 1e-12
    assert z.min() >= 0.0 and z.max() <= 1.0
