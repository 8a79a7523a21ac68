import numpy as np
import pytest

from app.core.exceptions import InvalidRangeException, ShapeMismatchException
from app.models.schedule import DiffusionSchedule, SamplerKind, TimestepSampler
from app.services.schedule_service import add_noise, make_schedule, sample_timestep, timestep_sequence


@pytest.fixture
def toy_sched():
    # ᾱ_1 = 0.64 → coeficientes (0.8, 0.6)
    return DiffusionSchedule(num_steps=2, alpha_bar=np.array([1.0, 0.64, 0.36]))


def test_default_schedule_invariants(sched):
    assert sched.alpha_bar[0] == 1.0
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert 0 < sched.alpha_bar[-1] < sched.alpha_bar[0]
    np.testing.assert_allclose(sched.sigma ** 2 + sched.alpha_bar, 1.0, atol=1e-12)


def test_two_step_schedule_by_hand():
    sched = make_schedule(2, 0.1, 0.2)
    np.testing.assert_allclose(sched.alpha_bar, [1.0, 0.9, 0.72], rtol=0, atol=1e-15)


@pytest.mark.parametrize("num_steps,beta_min,beta_max", [
    (2, 0.2, 0.1),
    (1, 0.1, 0.2),
    (10, 0.0, 0.2),
    (10, 0.1, 1.0),
    (10, 0.1, 0.1),
])
def test_make_schedule_rejects_bad_ranges(num_steps, beta_min, beta_max):
    with pytest.raises(InvalidRangeException):
        make_schedule(num_steps, beta_min, beta_max)


@pytest.mark.parametrize("alpha_bar", [
    [0.9, 0.64, 0.36],
    [1.0, 0.64, 0.64],
    [1.0, 0.36, 0.64],
    [1.0, 0.64, 0.0],
    [1.0, 0.64, float("nan")],
])
def test_schedule_rejects_broken_alpha_bar(alpha_bar):
    with pytest.raises(InvalidRangeException):
        DiffusionSchedule(num_steps=2, alpha_bar=np.array(alpha_bar))


def test_add_noise_examples(toy_sched):
    np.testing.assert_allclose(add_noise(np.array([1.0, 0.0]), 1, np.array([0.0, 1.0]), toy_sched), [0.8, 0.6])
    np.testing.assert_allclose(add_noise(np.array([1.0, 0.0]), 1, np.zeros(2), toy_sched), [0.8, 0.0])
    assert np.all(add_noise(np.zeros(3), 2, np.zeros(3), toy_sched) == 0)


def test_add_noise_shape_mismatch(toy_sched):
    with pytest.raises(ShapeMismatchException):
        add_noise(np.zeros(2), 1, np.zeros(3), toy_sched)


def test_add_noise_rejects_t_zero(toy_sched):
    with pytest.raises(InvalidRangeException):
        add_noise(np.zeros(2), 0, np.zeros(2), toy_sched)


def test_variance_preserving_coefficients(sched):
    for t in range(1, sched.num_steps + 1):
        a, s = sched.coefficients(t)
        assert abs(a ** 2 + s ** 2 - 1.0) < 1e-12


@pytest.mark.parametrize("total_iters,iteration,expected", [
    (3000, 0, 980),
    (3000, 2999, 20),
    (2, 1, 20),
    (1, 0, 980),
])
def test_non_increasing_linear_endpoints(total_iters, iteration, expected):
    sampler = TimestepSampler(SamplerKind.NON_INCREASING_LINEAR, 20, 980, total_iters)
    assert sample_timestep(sampler, iteration) == expected


def test_non_increasing_linear_rounds_half_up():
    # 3 - 2·1/4 = 2.5 → 3
    sampler = TimestepSampler(SamplerKind.NON_INCREASING_LINEAR, 1, 3, 5)
    assert timestep_sequence(sampler) == [3, 3, 2, 2, 1]


def test_non_increasing_linear_is_monotone(rng):
    for _ in range(200):
        t_min = int(rng.integers(1, 500))
        t_max = int(rng.integers(t_min, 1001))
        total = int(rng.integers(1, 400))
        seq = timestep_sequence(TimestepSampler(SamplerKind.NON_INCREASING_LINEAR, t_min, t_max, total))
        assert seq[0] == t_max
        assert seq[-1] == (t_min if total > 1 else t_max)
        assert all(a >= b for a, b in zip(seq, seq[1:]))


def test_uniform_random_is_deterministic_and_in_range():
    sampler = TimestepSampler(SamplerKind.UNIFORM_RANDOM, 20, 980, 500, rng_seed=42)
    first = timestep_sequence(sampler)
    assert first == timestep_sequence(sampler)
    assert all(20 <= t <= 980 for t in first)
    assert len(set(first)) > 1
    other_seed = TimestepSampler(SamplerKind.UNIFORM_RANDOM, 20, 980, 500, rng_seed=43)
    assert timestep_sequence(other_seed) != first


@pytest.mark.parametrize("iteration", [-1, 10, 1.5])
def test_sample_timestep_rejects_out_of_range_iter(iteration):
    sampler = TimestepSampler(SamplerKind.NON_INCREASING_LINEAR, 20, 980, 10)
    with pytest.raises(InvalidRangeException):
        sample_timestep(sampler, iteration)


def test_sampler_invariants(sched):
    with pytest.raises(InvalidRangeException):
        TimestepSampler(SamplerKind.UNIFORM_RANDOM, 0, 10, 5)
    with pytest.raises(InvalidRangeException):
        TimestepSampler(SamplerKind.UNIFORM_RANDOM, 20, 10, 5)
    with pytest.raises(InvalidRangeException):
        TimestepSampler(SamplerKind.UNIFORM_RANDOM, 1, 2000, 5).check_against(sched)
