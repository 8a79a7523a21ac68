import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from PIL import Image

from ..core.logging_config import get_logger

logger = get_logger(__name__)

FINAL_IMAGE_NPY = "final_image.npy"
FINAL_IMAGE_PNG = "final_image.png"
EDIT_LOG_CSV = "edit_log.csv"
METRICS_CSV = "metrics.csv"
MANIFEST_JSON = "manifest.json"
ERROR_JSON = "error.json"
COMPARE_CSV = "compare.csv"
COMPARE_GRID_PNG = "compare_grid.png"
COMPARE_REPORT_JSON = "compare_report.json"


def image_to_png_bytes(image: np.ndarray) -> bytes:
    """
    Codifica una grilla de píxeles como PNG en escala de grises de 8 bits.

    Los valores se llevan de [-1, 1] a [0, 255] con recorte; un tercer eje de
    tamaño 3 se interpreta como RGB.
    """
    array = np.asarray(image, dtype=np.float64)
    scaled = np.clip((array + 1.0) * 127.5, 0, 255).round().astype(np.uint8)
    if scaled.ndim == 1:
        scaled = scaled.reshape(1, -1)
    elif scaled.ndim > 2 and not (scaled.ndim == 3 and scaled.shape[-1] == 3):
        scaled = scaled.reshape(scaled.shape[0], -1)
    buffer = io.BytesIO()
    Image.fromarray(scaled).save(buffer, format="PNG")
    return buffer.getvalue()


class ArtifactRepository:
    """Escritura atómica de artefactos de una corrida dentro de `base_dir`"""

    def __init__(self, base_dir: os.PathLike | str):
        self.base_dir = Path(base_dir)

    def path(self, name: str) -> Path:
        return self.base_dir / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _write_bytes(self, name: str, payload: bytes) -> Path:
        self.base_dir.mkdir(parents=True, exist_ok=True)
        target = self.path(name)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.base_dir)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        logger.debug(f"Artefacto escrito: {target}")
        return target

    def write_array(self, name: str, array: np.ndarray) -> Path:
        buffer = io.BytesIO()
        np.save(buffer, np.asarray(array, dtype=np.float64), allow_pickle=False)
        return self._write_bytes(name, buffer.getvalue())

    def read_array(self, name: str) -> np.ndarray:
        return np.load(self.path(name), allow_pickle=False)

    def write_png(self, name: str, image: np.ndarray) -> Path:
        return self._write_bytes(name, image_to_png_bytes(image))

    def write_png_bytes(self, name: str, payload: bytes) -> Path:
        return self._write_bytes(name, payload)

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return self._write_bytes(name, buffer.getvalue().encode("utf-8"))

    def read_csv(self, name: str) -> List[Dict[str, str]]:
        with self.path(name).open("r", encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))

    def write_json(self, name: str, payload: Any) -> Path:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
        return self._write_bytes(name, (text + "\n").encode("utf-8"))

    def read_json(self, name: str) -> Any:
        with self.path(name).open("r", encoding="utf-8") as fh:
            return json.load(fh)

    def remove(self, *names: str) -> None:
        for name in names:
            target: Optional[Path] = self.path(name)
            if target.exists():
                target.unlink()
