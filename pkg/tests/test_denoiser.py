import numpy as np
import pytest

from app.core.exceptions import (
    BackendLoadException,
    ConfigException,
    DimensionMismatchException,
    InvalidRangeException,
    NonFinitePredictionException,
    ShapeMismatchException,
    TimestepMismatchException,
    UnknownPromptException,
    ValidationException,
)
from app.models.denoiser import Condition, DenoiserBackend, GmmCondition, NoisePrediction
from app.models.schedule import DiffusionSchedule
from app.schemas.config import BackendSpec
from app.services.denoiser_service import (
    CountingBackend,
    analytic_backend,
    cfg_compose,
    gmm_log_density,
    gmm_marginal_params,
    gmm_posterior_mean,
    gmm_predict,
    load_backend,
    marginal_condition,
    prompt_responsibilities,
)
from app.services.selftest_service import finite_difference_case, random_mixture


@pytest.fixture
def toy_sched():
    return DiffusionSchedule(num_steps=2, alpha_bar=np.array([1.0, 0.64, 0.36]))


def _pred(values, t=1, condition=None):
    return NoisePrediction(np.asarray(values, dtype=float), t, condition or Condition.null())


def test_condition_invariants():
    assert Condition.null().is_null
    assert str(Condition.null()) == "∅"
    assert Condition.prompt("A").prompt_id == "A"
    with pytest.raises(ValidationException):
        Condition("null", "A")
    with pytest.raises(ValidationException):
        Condition("prompt")


def test_noise_prediction_rejects_non_finite():
    with pytest.raises(NonFinitePredictionException):
        _pred([np.nan, 0.0])


@pytest.mark.parametrize("scale,expected", [(1.0, [1.0, 0.0]), (0.0, [0.5, 0.5]), (7.5, [4.25, -3.25])])
def test_cfg_compose_examples(scale, expected):
    np.testing.assert_allclose(cfg_compose(_pred([1, 0]), _pred([0.5, 0.5]), scale), expected)


def test_cfg_compose_errors():
    with pytest.raises(ShapeMismatchException):
        cfg_compose(_pred([1, 0]), _pred([1, 0, 0]), 1.0)
    with pytest.raises(TimestepMismatchException):
        cfg_compose(_pred([1, 0], t=1), _pred([1, 0], t=2), 1.0)


def test_cfg_compose_is_affine_in_scale(rng):
    a, n = _pred(rng.standard_normal(4)), _pred(rng.standard_normal(4))
    s1, s2 = 2.0, 9.0
    midpoint = cfg_compose(a, n, (s1 + s2) / 2)
    np.testing.assert_allclose(midpoint, (cfg_compose(a, n, s1) + cfg_compose(a, n, s2)) / 2, atol=1e-12)


def test_gmm_condition_invariants():
    with pytest.raises(InvalidRangeException):
        GmmCondition(means=[[0.0], [1.0]], weights=[0.5, 0.6])
    with pytest.raises(ValidationException):
        GmmCondition(means=[[0.0], [1.0]], weights=[1.0])
    with pytest.raises(InvalidRangeException):
        GmmCondition(means=[[0.0]], weights=[1.0], data_sigma=-1.0)


def test_marginal_params(toy_sched):
    cond = GmmCondition.single([1.0, 0.0])
    [(mean, variance, weight)] = gmm_marginal_params(cond, 1, toy_sched)
    np.testing.assert_allclose(mean, [0.8, 0.0])
    assert variance == pytest.approx(0.36)
    assert weight == 1.0


def test_marginal_params_noise_limit(sched):
    cond = GmmCondition(means=[[2.0], [-3.0]], weights=[0.5, 0.5], data_sigma=0.3)
    for mean, variance, _ in gmm_marginal_params(cond, sched.num_steps, sched):
        assert abs(mean[0]) < 0.05
        assert variance == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("z,expected", [([0.8, 0.0], [0.0, 0.0]), ([1.4, 0.6], [1.0, 1.0])])
def test_gmm_predict_single_component(toy_sched, z, expected):
    eps = gmm_predict(np.array(z), GmmCondition.single([1.0, 0.0]), 1, toy_sched).eps_hat
    np.testing.assert_allclose(eps, expected, atol=1e-12)


def test_gmm_predict_symmetric_mixture_at_origin(sched):
    cond = GmmCondition(means=[[1.0, -1.0], [-1.0, 1.0]], weights=[0.5, 0.5])
    np.testing.assert_allclose(gmm_predict(np.zeros(2), cond, 300, sched).eps_hat, 0.0, atol=1e-12)


def test_gmm_predict_keeps_latent_shape(sched):
    cond = GmmCondition.single([0.1, 0.2, 0.3, 0.4])
    assert gmm_predict(np.zeros((2, 2)), cond, 10, sched).shape == (2, 2)


def test_gmm_predict_dimension_mismatch(sched):
    with pytest.raises(DimensionMismatchException):
        gmm_predict(np.zeros(3), GmmCondition.single([0.0, 0.0]), 10, sched)


def test_gmm_predict_rejects_t_zero(sched):
    with pytest.raises(InvalidRangeException):
        gmm_predict(np.zeros(1), GmmCondition.single([0.0]), 0, sched)


def test_finite_difference_oracle(sched, rng):
    for _ in range(50):
        dim = int(rng.integers(1, 5))
        cond = random_mixture(rng, dim)
        t = int(rng.integers(50, sched.num_steps + 1))
        a, s = sched.coefficients(t)
        z = a * cond.means[int(rng.integers(cond.num_components))] + s * rng.standard_normal(dim)
        assert finite_difference_case(cond, z, t, sched) < 1e-4


def test_small_t_mixture_is_stable(sched):
    # Lejos de todas las componentes a t pequeño: logsumexp evita el underflow
    cond = GmmCondition(means=[[-1.0], [1.0]], weights=[0.5, 0.5])
    eps = gmm_predict(np.array([40.0]), cond, 1, sched).eps_hat
    assert np.all(np.isfinite(eps))
    assert np.isfinite(gmm_log_density(np.array([40.0]), cond, 1, sched))


def test_posterior_mean_recovers_point_mass(sched):
    cond = GmmCondition.single([0.5, -0.5])
    a, s = sched.coefficients(400)
    z = a * np.array([0.5, -0.5]) + s * np.array([0.3, -1.2])
    np.testing.assert_allclose(gmm_posterior_mean(z, cond, 400, sched), [0.5, -0.5], atol=1e-12)


def test_backend_routing(two_mode_table, two_mode_backend, sched):
    z = np.array([0.3])
    null = marginal_condition(two_mode_table)
    np.testing.assert_array_equal(
        two_mode_backend.predict(z, Condition.null(), 500).eps_hat, gmm_predict(z, null, 500, sched).eps_hat
    )
    a, s = sched.coefficients(500)
    np.testing.assert_allclose(
        two_mode_backend.predict(z, Condition.prompt("target"), 500).eps_hat, (z - a * 1.0) / s, atol=1e-12
    )
    with pytest.raises(UnknownPromptException):
        two_mode_backend.predict(z, Condition.prompt("missing"), 500)


def test_backend_is_deterministic(two_mode_backend):
    z = np.array([0.123])
    first = two_mode_backend.predict(z, Condition.null(), 321).eps_hat
    second = two_mode_backend.predict(z, Condition.null(), 321).eps_hat
    assert first.tobytes() == second.tobytes()


def test_analytic_backend_requires_marginal_null(two_mode_table, sched):
    with pytest.raises(ValidationException):
        analytic_backend(two_mode_table, GmmCondition.single([-1.0]), sched)


def test_bayes_consistency(sched, rng):
    table = {
        "A": GmmCondition(means=[[-2.0], [-0.5]], weights=[0.3, 0.7], data_sigma=0.2),
        "B": GmmCondition.single([1.5], data_sigma=0.2),
    }
    priors = {"A": 0.4, "B": 0.6}
    null = marginal_condition(table, priors)
    backend = analytic_backend(table, null, sched)
    for _ in range(100):
        z = rng.uniform(-3, 3, size=1)
        t = int(rng.integers(1, sched.num_steps + 1))
        resp = prompt_responsibilities(z, table, t, sched, priors)
        weighted = sum(resp[k] * backend.predict(z, Condition.prompt(k), t).eps_hat for k in table)
        np.testing.assert_allclose(weighted, backend.predict(z, Condition.null(), t).eps_hat, atol=1e-6)


def test_predict2_image_and_text_restrictions(sched):
    table = {
        "left": GmmCondition(means=[[-1.0, 0.0]], weights=[1.0]),
        "right": GmmCondition.single([1.0, 0.0]),
        "up": GmmCondition(means=[[1.0, 0.4]], weights=[1.0]),
    }
    backend = analytic_backend(table, marginal_condition(table), sched, image_radius=0.5)
    z = np.array([0.2, 0.1])
    null = Condition.null()
    # sin imagen ni texto: marginal completa
    np.testing.assert_array_equal(backend.predict2(z, None, null, 200).eps_hat, backend.predict(z, null, 200).eps_hat)
    # imagen cerca de (1, 0): restringe a las dos componentes a radio 0.5
    near = GmmCondition(means=[[1.0, 0.0], [1.0, 0.4]], weights=[0.5, 0.5])
    right = backend.predict2(z, np.array([0.9, 0.0]), null, 200).eps_hat
    np.testing.assert_allclose(right, gmm_predict(z, near, 200, sched).eps_hat, atol=1e-12)
    # imagen + texto: intersección
    up = backend.predict2(z, np.array([0.9, 0.0]), Condition.prompt("up"), 200).eps_hat
    np.testing.assert_allclose(up, gmm_predict(z, table["up"], 200, sched).eps_hat, atol=1e-12)


def test_counting_backend_records_calls(two_mode_backend):
    counting = CountingBackend(two_mode_backend, record_latents=True)
    assert isinstance(counting, DenoiserBackend)
    counting.predict(np.array([0.1]), Condition.prompt("source"), 10)
    counting.predict2(np.array([0.2]), None, Condition.null(), 11)
    assert counting.count == 2
    assert [c.condition for c in counting.calls] == ["source", "∅"]
    np.testing.assert_array_equal(counting.calls[1].latent, [0.2])
    counting.reset()
    assert counting.count == 0


def test_load_backend_analytic(sched):
    spec = BackendSpec(prompts={"a": {"components": [{"mean": [0.0, 1.0]}]}, "b": {"components": [{"mean": [1.0, 0.0]}]}})
    backend = load_backend(spec, sched)
    assert backend.null_cond.num_components == 2


def test_load_backend_plugin_errors(sched):
    with pytest.raises(ConfigException):
        load_backend(BackendSpec(kind="plugin", target="no_such_module_xyz:factory"), sched)


def test_load_backend_plugin_factory_failure(sched, plugin_target):
    backend = load_backend(BackendSpec(kind="plugin", target=plugin_target), sched)
    assert isinstance(backend, DenoiserBackend)
    with pytest.raises(BackendLoadException, match="bogus") as excinfo:
        load_backend(BackendSpec(kind="plugin", target=plugin_target, options={"bogus": 1}), sched)
    assert excinfo.value.exit_code == 3
