import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .core.config import settings
from .core.exceptions import EXIT_CONFIG_ERROR, ScoreDistillBaseException
from .core.logging_config import get_logger, setup_logging

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description=f"{settings.app_name} {settings.app_version}: edición por score distillation",
    )
    parser.add_argument("--log-level", default=None, help="Nivel de logging (por defecto LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    edit = sub.add_parser("edit", help="Corre una edición desde un config o un manifest.json")
    edit.add_argument("config", help="Ruta al config JSON")
    edit.add_argument("--output-root", default=None, help="Raíz de artefactos (por defecto OUTPUT_ROOT)")

    compare = sub.add_parser("compare", help="Corre varios configs y genera CSV y grilla combinados")
    compare.add_argument("configs", nargs="+", help="Rutas a configs JSON")
    compare.add_argument(
        "--sweep",
        action="append",
        default=[],
        metavar="KEY[=V1,V2,...]",
        help="Clave del barrido (con puntos para campos anidados); con valores expande cada config",
    )
    compare.add_argument("--output-root", default=None)
    compare.add_argument("--name", default="compare", help="Subdirectorio de la comparación")
    compare.add_argument("--workers", type=int, default=None, help="Procesos en paralelo (por defecto COMPARE_WORKERS)")
    compare.add_argument("--no-plot", action="store_true", help="No generar la grilla PNG")

    sub.add_parser("selftest", help="Corre las suites de verificación numérica")

    seed = sub.add_parser("seed", help="Escribe los escenarios de ejemplo")
    seed.add_argument("--output", default="configs", help="Directorio destino")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse sale con 2 ante errores de uso; --help sale con 0
        return int(e.code or 0)

    setup_logging(
        args.log_level or ("DEBUG" if settings.debug else settings.log_level),
        settings.environment,
        settings.log_dir if settings.log_to_file else None,
    )

    # Imports diferidos: matplotlib sólo se carga si se usa
    try:
        if args.command == "edit":
            from .services.experiment_service import cmd_edit

            return cmd_edit(args.config, args.output_root)
        if args.command == "compare":
            from .services.experiment_service import cmd_compare

            if args.workers is not None and args.workers < 1:
                parser.error("--workers debe ser >= 1")
            return cmd_compare(
                args.configs, args.sweep, args.output_root, args.name, args.workers, plot=not args.no_plot
            )
        if args.command == "selftest":
            from .services.selftest_service import cmd_selftest

            return cmd_selftest()
        if args.command == "seed":
            from .seeds.seed_data import write_scenarios

            write_scenarios(Path(args.output))
            return 0
    except SystemExit as e:
        return int(e.code or 0)
    except ScoreDistillBaseException as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    return EXIT_CONFIG_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
