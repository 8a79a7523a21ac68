import csv
import json

import numpy as np
import pytest

from app.main import main
from app.services import experiment_service


def _read_csv(path):
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def out_root(tmp_path):
    return tmp_path / "runs"


def test_edit_writes_artifacts(convergence_doc, write_config, out_root):
    path = write_config({**convergence_doc, "total_iters": 30})
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 0

    run_dir = out_root / "convergence_1d"
    assert {p.name for p in run_dir.iterdir()} == {"final_image.npy", "edit_log.csv", "metrics.csv", "manifest.json"}
    rows = _read_csv(run_dir / "edit_log.csv")
    assert [int(r["iter"]) for r in rows] == list(range(30))
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "completed"
    assert manifest["iterations_completed"] == 30
    assert manifest["seeds"] == {"noise_seed": 0, "sampler_seed": 0}
    assert manifest["config"]["run_id"] == "convergence_1d"
    metrics = _read_csv(run_dir / "metrics.csv")
    assert [m["metric_name"] for m in metrics] == ["mse"]


def test_edit_writes_png_for_images(single_gaussian_doc, write_config, out_root):
    path = write_config({**single_gaussian_doc, "total_iters": 5})
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 0
    assert (out_root / single_gaussian_doc["run_id"] / "final_image.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_edit_uses_output_root_from_environment(convergence_doc, write_config, tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_ROOT", str(tmp_path / "desde_env"))
    path = write_config({**convergence_doc, "total_iters": 3})
    assert main(["edit", str(path)]) == 0
    assert (tmp_path / "desde_env" / "convergence_1d" / "manifest.json").exists()


def test_malformed_config_exits_with_two(tmp_path, out_root):
    path = tmp_path / "roto.json"
    path.write_text("{no es json", encoding="utf-8")
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 2
    error_dir = out_root / "roto"
    assert [p.name for p in error_dir.iterdir()] == ["error.json"]
    error = json.loads((error_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "ConfigException"
    assert error["exit_code"] == 2


def test_invalid_config_exits_with_two(convergence_doc, write_config, out_root):
    path = write_config({**convergence_doc, "target_prompt": "inexistente"})
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 2
    # el config se llama como su run_id: sólo queda error.json
    assert [p.name for p in (out_root / "convergence_1d").iterdir()] == ["error.json"]


def test_divergent_run_aborts_with_three(convergence_doc, write_config, out_root):
    path = write_config({**convergence_doc, "step_size": 1e6})
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 3

    run_dir = out_root / "convergence_1d"
    assert not (run_dir / "final_image.npy").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "aborted"
    rows = _read_csv(run_dir / "edit_log.csv")
    assert 0 < len(rows) == manifest["iterations_completed"] < convergence_doc["total_iters"]
    error = json.loads((run_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "NonFiniteGradientException"
    assert error["iteration"] == len(rows)


def _plugin_doc(document, target, **options):
    return {**document, "backend": {"kind": "plugin", "target": target, "options": options}}


def test_plugin_factory_error_exits_with_three(convergence_doc, plugin_target, write_config, out_root):
    path = write_config(_plugin_doc(convergence_doc, plugin_target, bogus=1))
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 3
    run_dir = out_root / "convergence_1d"
    assert [p.name for p in run_dir.iterdir()] == ["error.json"]
    error = json.loads((run_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "BackendLoadException"
    assert error["exit_code"] == 3
    assert "bogus" in error["detail"]


def test_backend_failure_mid_run_keeps_partial_log(convergence_doc, plugin_target, write_config, out_root):
    # 3 consultas por iteración SSD: la consulta 31 cae en la iteración 10
    path = write_config(_plugin_doc(convergence_doc, plugin_target, fail_after=30))
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 3

    run_dir = out_root / "convergence_1d"
    assert not (run_dir / "final_image.npy").exists()
    rows = _read_csv(run_dir / "edit_log.csv")
    assert [int(r["iter"]) for r in rows] == list(range(10))
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "aborted"
    assert manifest["iterations_completed"] == 10
    error = json.loads((run_dir / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "BackendQueryException"
    assert error["iteration"] == 10


def test_unexpected_error_exits_with_three(convergence_doc, write_config, out_root, monkeypatch):
    def explode(config):
        raise KeyError("inesperado")

    monkeypatch.setattr(experiment_service, "run_edit", explode)
    path = write_config(convergence_doc)
    assert main(["edit", str(path), "--output-root", str(out_root)]) == 3
    error = json.loads((out_root / "convergence_1d" / "error.json").read_text(encoding="utf-8"))
    assert error == {"error": "KeyError", "detail": "Error inesperado: 'inesperado'", "exit_code": 3}


def test_compare_records_plugin_failure(convergence_doc, plugin_target, write_config, out_root):
    path = write_config(_plugin_doc(convergence_doc, plugin_target, fail_after=30))
    code = main(["compare", str(path), "--sweep", "step_size=0.05,0.01", "--output-root", str(out_root), "--no-plot"])
    assert code == 3
    report = json.loads((out_root / "compare" / "compare_report.json").read_text(encoding="utf-8"))
    assert [f["status"] for f in report["failures"]] == ["aborted", "aborted"]
    assert report["rows_written"] == 0


def test_rerun_from_manifest_is_bit_identical(region_doc, write_config, tmp_path):
    path = write_config({**region_doc, "total_iters": 25})
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["edit", str(path), "--output-root", str(first)]) == 0
    manifest = first / "region_toy_2d" / "manifest.json"
    assert main(["edit", str(manifest), "--output-root", str(second)]) == 0
    for name in ("final_image.npy", "edit_log.csv", "metrics.csv", "manifest.json"):
        assert (first / "region_toy_2d" / name).read_bytes() == (second / "region_toy_2d" / name).read_bytes()


def test_compare_weight_sweep(region_doc, write_config, out_root):
    document = {**region_doc, "estimator": "ssd_full", "total_iters": 15}
    path = write_config(document)
    code = main([
        "compare", str(path),
        "--sweep", "weights.w_t=0,1",
        "--sweep", "weights.w_e=0,1.5",
        "--output-root", str(out_root),
        "--name", "pesos",
    ])
    assert code == 0

    compare_dir = out_root / "pesos"
    rows = _read_csv(compare_dir / "compare.csv")
    assert len(rows) == 4
    assert list(rows[0]) == ["run_id", "weights.w_t", "weights.w_e", "mse", "region_mse:A", "region_mse:B"]
    assert {(r["weights.w_t"], r["weights.w_e"]) for r in rows} == {
        ("0.0", "0.0"), ("0.0", "1.5"), ("1.0", "0.0"), ("1.0", "1.5"),
    }
    assert (compare_dir / "compare_grid.png").read_bytes()[:4] == b"\x89PNG"
    assert len(list((compare_dir / "runs").iterdir())) == 4
    report = json.loads((compare_dir / "compare_report.json").read_text(encoding="utf-8"))
    assert report["rows_written"] == 4 and report["failures"] == []


def test_compare_estimator_sweep(region_doc, write_config, out_root):
    ssd = write_config({**region_doc, "total_iters": 20})
    dds = write_config({**region_doc, "total_iters": 20, "estimator": "dds", "run_id": "region_toy_2d_dds"})
    code = main([
        "compare", str(ssd), str(dds), "--sweep", "estimator", "--output-root", str(out_root), "--no-plot",
    ])
    assert code == 0
    rows = _read_csv(out_root / "compare" / "compare.csv")
    assert [r["estimator"] for r in rows] == ["ssd", "dds"]
    assert all("region_mse:A" in r and "region_mse:B" in r for r in rows)
    assert not (out_root / "compare" / "compare_grid.png").exists()


def test_compare_parallel_matches_serial(region_doc, write_config, tmp_path):
    path = write_config({**region_doc, "total_iters": 10})
    args = ["compare", str(path), "--sweep", "step_size=0.01,0.05", "--no-plot"]
    assert main([*args, "--output-root", str(tmp_path / "serie")]) == 0
    assert main([*args, "--output-root", str(tmp_path / "paralelo"), "--workers", "2"]) == 0
    serial = (tmp_path / "serie" / "compare" / "compare.csv").read_bytes()
    assert serial == (tmp_path / "paralelo" / "compare" / "compare.csv").read_bytes()


def test_compare_reports_failed_runs(convergence_doc, write_config, out_root):
    path = write_config(convergence_doc)
    code = main(["compare", str(path), "--sweep", "step_size=0.05,1e6", "--output-root", str(out_root)])
    assert code == 3
    rows = _read_csv(out_root / "compare" / "compare.csv")
    assert len(rows) == 1
    report = json.loads((out_root / "compare" / "compare_report.json").read_text(encoding="utf-8"))
    assert [f["status"] for f in report["failures"]] == ["aborted"]


def test_compare_needs_two_runs(convergence_doc, write_config, out_root):
    path = write_config(convergence_doc)
    assert main(["compare", str(path), "--output-root", str(out_root)]) == 2
    error = json.loads((out_root / "compare" / "error.json").read_text(encoding="utf-8"))
    assert error["error"] == "UsageException"


def test_compare_rejects_undeclared_differences(convergence_doc, write_config, out_root):
    a = write_config(convergence_doc, name="a")
    b = write_config({**convergence_doc, "run_id": "otro", "step_size": 0.01}, name="b")
    assert main(["compare", str(a), str(b), "--sweep", "estimator", "--output-root", str(out_root)]) == 2
    error = json.loads((out_root / "compare" / "error.json").read_text(encoding="utf-8"))
    assert "step_size" in error["detail"]
    assert not (out_root / "compare" / "runs").exists()


def test_usage_errors_exit_with_two(convergence_doc, write_config):
    assert main([]) == 2
    assert main(["desconocido"]) == 2
    path = write_config(convergence_doc)
    assert main(["compare", str(path), str(path), "--workers", "0"]) == 2


def test_seed_writes_valid_scenarios(tmp_path, out_root):
    target = tmp_path / "escenarios"
    assert main(["seed", "--output", str(target)]) == 0
    names = sorted(p.stem for p in target.glob("*.json"))
    assert names == ["convergence_1d", "region_toy_2d", "region_toy_2d_dds", "single_gaussian"]
    document = json.loads((target / "single_gaussian.json").read_text(encoding="utf-8"))
    document["total_iters"] = 2
    (target / "single_gaussian.json").write_text(json.dumps(document), encoding="utf-8")
    assert main(["edit", str(target / "single_gaussian.json"), "--output-root", str(out_root)]) == 0
    image = np.load(out_root / "single_gaussian" / "final_image.npy")
    assert image.shape == (2, 2)
