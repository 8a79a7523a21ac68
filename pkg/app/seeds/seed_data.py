"""
Script para escribir los escenarios de ejemplo como configs JSON
Uso: python -m app seed [--output DIR]
"""

import json
from copy import deepcopy
from pathlib import Path
from typing import Dict, List

from app.core.logging_config import get_logger
from app.schemas.config import EditConfig
from app.seeds.data.scenarios import SCENARIOS

logger = get_logger(__name__)


def scenario_documents() -> Dict[str, dict]:
    """
    Escenarios base más la pareja DDS/SSD del toy 2-D, lista para
    `compare --sweep estimator`.
    """
    documents = {name: deepcopy(doc) for name, doc in SCENARIOS.items()}
    dds = deepcopy(SCENARIOS["region_toy_2d"])
    dds["run_id"] = "region_toy_2d_dds"
    dds["estimator"] = "dds"
    documents["region_toy_2d_dds"] = dds
    return documents


def write_scenarios(output_dir: Path) -> List[Path]:
    """Valida cada escenario y lo escribe como <nombre>.json"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    print(f"\n[INFO] Escribiendo escenarios en {output_dir}...")

    written = []
    for name, document in scenario_documents().items():
        EditConfig.model_validate(document)
        path = output_dir / f"{name}.json"
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
        print(f"  OK {path.name}")

    print(f"OK {len(written)} escenarios escritos")
    logger.info(f"Escenarios escritos en {output_dir}: {len(written)}")
    return written
