import io
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..core.logging_config import get_logger  # noqa: E402

logger = get_logger(__name__)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _distinct(values: list) -> list:
    seen: list = []
    for value in values:
        if value not in seen:
            seen.append(value)
    return seen


def grid_layout(sweep_keys: Sequence[str], sweeps: List[Dict[str, Any]]) -> tuple[list, list, list]:
    """
    (fila, columna) de cada panel más las etiquetas de filas y columnas.

    Con dos o más keys el primero indexa filas y el resto columnas; con uno
    solo la grilla es una fila; sin keys cada corrida es una columna.
    """
    keys = list(sweep_keys)
    if not keys:
        return [(0, i) for i in range(len(sweeps))], [None], list(range(len(sweeps)))
    row_keys, col_keys = (keys[:1], keys[1:]) if len(keys) >= 2 else ([], keys)
    row_ids = [tuple(_format_value(s.get(k)) for k in row_keys) for s in sweeps]
    col_ids = [tuple(_format_value(s.get(k)) for k in col_keys) for s in sweeps]
    rows, cols = _distinct(row_ids), _distinct(col_ids)
    positions = [(rows.index(r), cols.index(c)) for r, c in zip(row_ids, col_ids)]
    return positions, rows, cols


class PlotGenerator:
    @staticmethod
    def compare_grid_png(
        sweep_keys: Sequence[str],
        panels: List[Dict[str, Any]],
        source_image: Optional[np.ndarray] = None,
        title: str = "Comparación",
    ) -> bytes:
        """
        Genera la grilla de comparación como PNG.

        Cada panel es {"sweep": {...}, "image": ndarray | None, "label": str};
        sin imagen (corrida fallida) el panel queda marcado como fallido.
        Imágenes 1-D se dibujan como barras junto a la fuente.
        """
        positions, rows, cols = grid_layout(sweep_keys, [p["sweep"] for p in panels])
        fig, axes = plt.subplots(
            len(rows), len(cols), figsize=(2.6 * len(cols), 2.4 * len(rows)), squeeze=False
        )
        for ax in axes.flat:
            ax.set_xticks([])
            ax.set_yticks([])
            ax.set_frame_on(False)

        for (r, c), panel in zip(positions, panels):
            ax = axes[r][c]
            ax.set_frame_on(True)
            image = panel.get("image")
            if image is None:
                ax.text(0.5, 0.5, "fallida", ha="center", va="center", color="firebrick")
            else:
                image = np.asarray(image, dtype=np.float64)
                if image.ndim >= 2:
                    flat = image if image.ndim == 2 else image.reshape(image.shape[0], -1)
                    ax.imshow(flat, cmap="gray", vmin=-1.0, vmax=1.0)
                else:
                    positions_x = np.arange(image.size)
                    if source_image is not None:
                        ax.bar(positions_x - 0.2, np.asarray(source_image).reshape(-1), width=0.4, color="lightgray")
                    ax.bar(positions_x + 0.2, image, width=0.4, color="steelblue")
                    ax.axhline(0.0, color="black", linewidth=0.5)
                    ax.set_ylim(-2.0, 2.0)
            labels = [f"{k}={_format_value(panel['sweep'].get(k))}" for k in sweep_keys]
            if panel.get("label"):
                labels.append(panel["label"])
            ax.set_title("\n".join(labels), fontsize=7)

        fig.suptitle(title, fontsize=9)
        fig.tight_layout()
        buffer = io.BytesIO()
        fig.savefig(buffer, format="png", dpi=100)
        plt.close(fig)
        logger.debug(f"Grilla de comparación generada: {len(rows)}x{len(cols)}")
        return buffer.getvalue()
