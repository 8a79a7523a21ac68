"""
Orquestación de corridas: `edit` (una corrida con sus artefactos) y
`compare` (barrido de configs con CSV combinado y grilla de imágenes).
"""
import itertools
import json
import re
from concurrent.futures import ProcessPoolExecutor
from copy import deepcopy
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import Settings, settings
from ..core.exceptions import (
    EXIT_OK,
    EXIT_RUNTIME_ABORT,
    ConfigException,
    NonFiniteGradientException,
    ScoreDistillBaseException,
    UsageException,
)
from ..core.logging_config import get_logger
from ..models.edit import EditLog
from ..repositories.artifact_repo import (
    COMPARE_CSV,
    COMPARE_GRID_PNG,
    COMPARE_REPORT_JSON,
    EDIT_LOG_CSV,
    ERROR_JSON,
    FINAL_IMAGE_NPY,
    FINAL_IMAGE_PNG,
    MANIFEST_JSON,
    METRICS_CSV,
    ArtifactRepository,
)
from ..repositories.config_repo import ConfigRepository
from ..schemas.config import EditConfig, ExperimentSpec
from ..schemas.edit_log import EDIT_LOG_COLUMNS
from ..schemas.report import CompareReport, RunManifest, RunSummary
from .edit_service import run_edit
from .metrics_service import PromptMeanEmbedder, compute_metrics, metric_rows
from .plot_generator import PlotGenerator

logger = get_logger(__name__)

METRIC_COLUMNS = ["run_id", "metric_name", "value"]
RUN_ARTIFACTS = [FINAL_IMAGE_NPY, FINAL_IMAGE_PNG, EDIT_LOG_CSV, METRICS_CSV, MANIFEST_JSON, ERROR_JSON]
_RUN_ID_UNSAFE = re.compile(r"[^A-Za-z0-9_.=+-]")


def resolve_output_root(cli_value: Optional[str] = None) -> Path:
    """--output-root gana sobre OUTPUT_ROOT, que gana sobre el default"""
    if cli_value:
        return Path(cli_value)
    return Path(Settings().output_root)


def edit_log_columns(config: EditConfig) -> List[str]:
    columns = list(EDIT_LOG_COLUMNS)
    if config.metrics.per_iteration:
        columns += [f"region_mse:{name}" for name in sorted(config.metrics.regions)]
    return columns


def _build_manifest(config: EditConfig, status: str, log: EditLog, artifacts: List[str], metric_names: List[str]) -> RunManifest:
    return RunManifest(
        run_id=config.run_id,
        toolkit_version=settings.app_version,
        edit_log_columns=edit_log_columns(config),
        metric_columns=metric_names,
        seeds={"noise_seed": config.seeds.noise_seed, "sampler_seed": config.seeds.sampler_seed},
        status=status,
        iterations_completed=len(log),
        artifacts=sorted(artifacts),
        config=config.model_dump(mode="json"),
    )


def _write_log(repo: ArtifactRepository, config: EditConfig, log: EditLog) -> None:
    repo.write_csv(EDIT_LOG_CSV, edit_log_columns(config), (record.to_row() for record in log))


def _metric_values(config: EditConfig, image: np.ndarray) -> Dict[str, float]:
    embedder = None
    if config.metrics.embedder == "prompt_mean":
        embedder = PromptMeanEmbedder.from_backend_spec(config.backend)
    return compute_metrics(
        config.metrics.names,
        config.source_array(),
        image,
        config.metrics.regions,
        config.source_prompt,
        config.target_prompt,
        embedder,
    )


def execute_run(config: EditConfig, run_dir: Path) -> RunSummary:
    """
    Corre una edición y escribe sus artefactos en `run_dir`.

    Un aborto conserva el log parcial y deja error.json junto al manifiesto.
    """
    repo = ArtifactRepository(run_dir)
    repo.remove(*RUN_ARTIFACTS)
    try:
        image, log = run_edit(config)
        values = _metric_values(config, image)
    except ScoreDistillBaseException as e:
        if e.partial_log is None and not isinstance(e, NonFiniteGradientException):
            repo.write_json(ERROR_JSON, e.to_dict())
            logger.error(f"Corrida '{config.run_id}' fallida: {e.detail}")
            return RunSummary(run_id=config.run_id, status="failed", exit_code=e.exit_code, error=e.detail)
        log = e.partial_log if e.partial_log is not None else EditLog()
        _write_log(repo, config, log)
        if isinstance(e, NonFiniteGradientException):
            error = {**e.to_dict(), "iteration": e.iteration, "t": e.t, "term_norms": e.term_norms}
        else:
            error = {**e.to_dict(), "iteration": len(log)}
        repo.write_json(ERROR_JSON, error)
        manifest = _build_manifest(config, "aborted", log, [EDIT_LOG_CSV, ERROR_JSON, MANIFEST_JSON], [])
        repo.write_json(MANIFEST_JSON, manifest.model_dump(mode="json"))
        logger.error(f"Corrida '{config.run_id}' abortada: {e.detail}")
        return RunSummary(run_id=config.run_id, status="aborted", exit_code=e.exit_code, error=e.detail)
    except Exception as e:
        detail = f"Error inesperado: {e}"
        repo.write_json(ERROR_JSON, {"error": type(e).__name__, "detail": detail, "exit_code": EXIT_RUNTIME_ABORT})
        logger.error(f"Corrida '{config.run_id}' fallida: {detail}", exc_info=True)
        return RunSummary(run_id=config.run_id, status="failed", exit_code=EXIT_RUNTIME_ABORT, error=detail)

    artifacts = [FINAL_IMAGE_NPY, EDIT_LOG_CSV, METRICS_CSV, MANIFEST_JSON]
    repo.write_array(FINAL_IMAGE_NPY, image)
    if image.ndim >= 2:
        repo.write_png(FINAL_IMAGE_PNG, image)
        artifacts.append(FINAL_IMAGE_PNG)
    _write_log(repo, config, log)
    rows = metric_rows(config.run_id, values)
    repo.write_csv(
        METRICS_CSV,
        METRIC_COLUMNS,
        ({"run_id": r.run_id, "metric_name": r.metric_name, "value": repr(r.value)} for r in rows),
    )
    manifest = _build_manifest(config, "completed", log, artifacts, list(values))
    repo.write_json(MANIFEST_JSON, manifest.model_dump(mode="json"))
    logger.info(f"Corrida '{config.run_id}' completada en {run_dir}")
    return RunSummary(run_id=config.run_id, status="completed", exit_code=EXIT_OK, metrics=values)


def _error_dir(output_root: Path, config_path: str) -> Path:
    return output_root / Path(config_path).stem


def cmd_edit(config_path: str, output_root: Optional[str] = None) -> int:
    """
    Ejecuta una corrida desde un config (o un manifest.json emitido).

    Returns:
        0 si completa, 2 ante config inválido, 3 ante aborto en tiempo de ejecución
    """
    root = resolve_output_root(output_root)
    try:
        config = ConfigRepository.load(config_path)
    except ConfigException as e:
        repo = ArtifactRepository(_error_dir(root, config_path))
        repo.write_json(ERROR_JSON, e.to_dict())
        logger.error(e.detail)
        return e.exit_code
    summary = execute_run(config, root / config.run_id)
    return summary.exit_code


# compare

def parse_sweep(tokens: Sequence[str]) -> Tuple[List[str], Dict[str, List[Any]]]:
    """
    `key` declara un eje en el que los configs difieren; `key=v1,v2` expande
    cada config sobre esos valores. Los valores se leen como JSON cuando se
    puede (números, booleanos) y si no como texto.
    """
    keys: List[str] = []
    grids: Dict[str, List[Any]] = {}
    for token in tokens:
        key, sep, raw = token.partition("=")
        key = key.strip()
        if not key:
            raise UsageException(f"sweep sin clave: '{token}'")
        if key in keys:
            raise UsageException(f"sweep repetido: '{key}'")
        keys.append(key)
        if sep:
            values = []
            for item in raw.split(","):
                item = item.strip()
                if not item:
                    raise UsageException(f"valor vacío en el sweep '{token}'")
                try:
                    values.append(json.loads(item))
                except json.JSONDecodeError:
                    values.append(item)
            grids[key] = values
    return keys, grids


def _get_path(document: Dict[str, Any], key: str) -> Any:
    node: Any = document
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _set_path(document: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = document
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise UsageException(f"'{key}' no apunta a un campo anidado del config")
        node = child
    node[parts[-1]] = value


def _flatten(document: Any, prefix: str = "") -> Dict[str, Any]:
    if not isinstance(document, dict):
        return {prefix: document}
    flat: Dict[str, Any] = {}
    for key, value in document.items():
        flat.update(_flatten(value, f"{prefix}.{key}" if prefix else key))
    return flat


def _suffix(value: Any) -> str:
    text = value if isinstance(value, str) else json.dumps(value)
    return _RUN_ID_UNSAFE.sub("-", text)


def expand_configs(documents: List[Dict[str, Any]], grids: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    if not grids:
        return [deepcopy(d) for d in documents]
    keys = list(grids)
    expanded = []
    for document in documents:
        for combo in itertools.product(*(grids[k] for k in keys)):
            variant = deepcopy(document)
            for key, value in zip(keys, combo):
                _set_path(variant, key, value)
            tag = "__".join(f"{key.split('.')[-1]}={_suffix(value)}" for key, value in zip(keys, combo))
            variant["run_id"] = f"{document.get('run_id', 'run')}__{tag}"
            expanded.append(variant)
    return expanded


def check_declared_differences(configs: List[EditConfig], sweep_keys: List[str]) -> None:
    """Los configs sólo pueden diferir en run_id y en los sweep keys declarados"""
    def covered(path: str) -> bool:
        return path == "run_id" or any(path == k or path.startswith(k + ".") for k in sweep_keys)

    reference = _flatten(configs[0].model_dump(mode="json"))
    for config in configs[1:]:
        flat = _flatten(config.model_dump(mode="json"))
        differing = sorted(
            path for path in set(reference) | set(flat)
            if not covered(path) and reference.get(path) != flat.get(path)
        )
        if differing:
            raise UsageException(
                f"'{config.run_id}' difiere de '{configs[0].run_id}' en claves no declaradas: {differing}"
            )


def build_experiment(
    config_paths: Sequence[str], sweep_tokens: Sequence[str], output_dir: Path, plot: bool = True
) -> ExperimentSpec:
    """
    Raises:
        ConfigException: algún config no valida
        UsageException: menos de dos corridas, run_id repetidos o diferencias no declaradas
    """
    sweep_keys, grids = parse_sweep(sweep_tokens)
    documents = []
    for path in config_paths:
        document = ConfigRepository.read_document(path)
        if "config" in document and "toolkit_version" in document:
            document = document["config"]
        documents.append(document)
    expanded = expand_configs(documents, grids)
    if len(expanded) < 2:
        raise UsageException("compare necesita al menos dos corridas (varios configs o un sweep con valores)")
    configs = [ConfigRepository.parse(d, origin=str(d.get("run_id", "<config>"))) for d in expanded]
    run_ids = [c.run_id for c in configs]
    if len(set(run_ids)) != len(run_ids):
        raise UsageException(f"run_id repetidos en el barrido: {sorted({r for r in run_ids if run_ids.count(r) > 1})}")
    check_declared_differences(configs, sweep_keys)
    sweep_values = [
        {key: _get_path(config.model_dump(mode="json"), key) for key in sweep_keys} for config in configs
    ]
    return ExperimentSpec(
        configs=configs, output_dir=str(output_dir), sweep_keys=sweep_keys, sweep_values=sweep_values, plot=plot
    )


def _compare_worker(document: Dict[str, Any], run_dir: str) -> Dict[str, Any]:
    config = EditConfig.model_validate(document)
    return execute_run(config, Path(run_dir)).model_dump(mode="json")


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> CompareReport:
    """Corre todas las corridas (en paralelo si workers > 1) y escribe los artefactos combinados"""
    output_dir = Path(spec.output_dir)
    runs_dir = output_dir / "runs"
    jobs = [(config.model_dump(mode="json"), str(runs_dir / config.run_id)) for config in spec.configs]

    if workers > 1:
        logger.info(f"compare: {len(jobs)} corridas con {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_worker, *zip(*jobs)))
    else:
        logger.info(f"compare: {len(jobs)} corridas en serie")
        results = [_compare_worker(document, run_dir) for document, run_dir in jobs]

    summaries = []
    for result, sweep in zip(results, spec.sweep_values):
        summary = RunSummary.model_validate(result)
        summaries.append(summary.model_copy(update={"sweep": sweep}))

    completed = [s for s in summaries if s.status == "completed"]
    failures = [s for s in summaries if s.status != "completed"]
    metric_names = sorted({name for s in completed for name in s.metrics})
    columns = ["run_id", *spec.sweep_keys, *metric_names]
    rows = []
    for summary in completed:
        row: Dict[str, Any] = {"run_id": summary.run_id}
        row.update({key: _cell(summary.sweep.get(key)) for key in spec.sweep_keys})
        row.update({name: repr(summary.metrics[name]) for name in metric_names if name in summary.metrics})
        rows.append(row)

    repo = ArtifactRepository(output_dir)
    repo.remove(COMPARE_GRID_PNG)
    repo.write_csv(COMPARE_CSV, columns, rows)
    if spec.plot:
        panels = []
        for config, summary in zip(spec.configs, summaries):
            image_path = runs_dir / config.run_id / FINAL_IMAGE_NPY
            image = np.load(image_path, allow_pickle=False) if summary.status == "completed" else None
            label = ", ".join(f"{k}={v:.3g}" for k, v in sorted(summary.metrics.items()) if k.startswith("region_mse"))
            panels.append({"sweep": summary.sweep, "image": image, "label": label})
        repo.write_png_bytes(
            COMPARE_GRID_PNG,
            PlotGenerator.compare_grid_png(spec.sweep_keys, panels, spec.configs[0].source_array()),
        )

    report = CompareReport(sweep_keys=spec.sweep_keys, runs=summaries, failures=failures, rows_written=len(rows))
    repo.write_json(COMPARE_REPORT_JSON, report.model_dump(mode="json"))
    if failures:
        logger.warning(f"compare: {len(failures)} corridas fallidas: {[f.run_id for f in failures]}")
    return report


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return "" if value is None else str(value)


def cmd_compare(
    config_paths: Sequence[str],
    sweep_tokens: Sequence[str],
    output_root: Optional[str] = None,
    name: str = "compare",
    workers: Optional[int] = None,
    plot: bool = True,
) -> int:
    """
    Returns:
        0 si todas las corridas completan; si no, el mayor código de salida entre
        las fallidas. Errores de config o de uso del barrido devuelven 2 sin correr nada.
    """
    output_dir = resolve_output_root(output_root) / name
    try:
        spec = build_experiment(config_paths, sweep_tokens, output_dir, plot)
    except (ConfigException, UsageException) as e:
        ArtifactRepository(output_dir).write_json(ERROR_JSON, e.to_dict())
        logger.error(e.detail)
        return e.exit_code
    report = run_experiment(spec, workers or settings.compare_workers)
    if not report.failures:
        return EXIT_OK
    return max(f.exit_code for f in report.failures) or EXIT_RUNTIME_ABORT

