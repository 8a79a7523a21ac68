import json
from copy import deepcopy

import numpy as np
import pytest

from app.core.config import settings
from app.models.denoiser import GmmCondition
from app.schemas.config import EditConfig
from app.seeds.data.scenarios import CONVERGENCE_1D, REGION_TOY_2D, SINGLE_GAUSSIAN
from app.services.denoiser_service import analytic_backend, marginal_condition
from app.services.schedule_service import make_schedule


@pytest.fixture(autouse=True)
def no_log_files(monkeypatch):
    # Los tests de CLI no deben dejar logs/ en el directorio de trabajo
    monkeypatch.setattr(settings, "log_to_file", False)


@pytest.fixture
def sched():
    return make_schedule(1000, 1e-4, 0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_mode_table():
    """Prompts 'source' en -1 y 'target' en +1 (1-D, masas puntuales)"""
    return {
        "source": GmmCondition.single([-1.0]),
        "target": GmmCondition.single([1.0]),
    }


@pytest.fixture
def two_mode_backend(two_mode_table, sched):
    return analytic_backend(two_mode_table, marginal_condition(two_mode_table), sched)


@pytest.fixture
def convergence_doc():
    return deepcopy(CONVERGENCE_1D)


@pytest.fixture
def region_doc():
    return deepcopy(REGION_TOY_2D)


@pytest.fixture
def single_gaussian_doc():
    return deepcopy(SINGLE_GAUSSIAN)


@pytest.fixture
def make_config():
    def _make(document, **overrides):
        document = deepcopy(document)
        document.update(overrides)
        return EditConfig.model_validate(document)
    return _make


@pytest.fixture
def write_config(tmp_path):
    def _write(document, name=None):
        path = tmp_path / "configs" / f"{name or document['run_id']}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document), encoding="utf-8")
        return path
    return _write


PLUGIN_SOURCE = '''
from app.models.denoiser import GmmCondition
from app.services.denoiser_service import analytic_backend, marginal_condition


class FlakyBackend:
    def __init__(self, inner, fail_after):
        self.inner = inner
        self.fail_after = fail_after
        self.calls = 0

    def _tick(self):
        self.calls += 1
        if self.fail_after is not None and self.calls > self.fail_after:
            raise RuntimeError("backend caído")

    def predict(self, latent, condition, t):
        self._tick()
        return self.inner.predict(latent, condition, t)

    def predict2(self, latent, image_cond, text_cond, t):
        self._tick()
        return self.inner.predict2(latent, image_cond, text_cond, t)


def make(schedule, fail_after=None):
    table = {"source": GmmCondition.single([-1.0]), "target": GmmCondition.single([1.0])}
    return FlakyBackend(analytic_backend(table, marginal_condition(table), schedule), fail_after)
'''


@pytest.fixture
def plugin_target(tmp_path, monkeypatch):
    """Backend plugin 1-D importable como 'flaky_denoiser:make'"""
    plugin_dir = tmp_path / "plugins"
    plugin_dir.mkdir()
    (plugin_dir / "flaky_denoiser.py").write_text(PLUGIN_SOURCE, encoding="utf-8")
    monkeypatch.syspath_prepend(str(plugin_dir))
    return "flaky_denoiser:make"
