"""Línea de comandos del simulador: un subcomando por pipeline.

Precedencia de cada opción: flag de la línea de comandos, después la sección del
subcomando en el YAML de `--config` y por último el valor por defecto.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from loguru import logger
from tabulate import tabulate

from src.config_loader import ConfigLoader
from src.csv_exporter import CSVExporter
from src.errors import ConfigError, RwoggError, exit_code_for
from src.pipeline import PIPELINES, RunConfig, SweepConfig  # noqa: F401
from src.settings import RwoggSettings

DEFAULTS: Dict[str, Dict] = {
    "simulate": {"mode": "exact", "numeric": "float", "mixing_slack": False},
    "stationary": {"lumped": False},
    "mixing": {"epsilon": "0.1,0.01", "lumped": False},
    "classify": {},
    "lhagg": {"method": "exact", "trials": 10_000, "seed": 0, "horizon": 200},
    "sweep": {"base": "2", "a": "0", "b": "0", "d1": 1, "c": 1.0, "round": "nearest", "horizon": 1000},
    "hitting": {"trials": 200, "seed": 0},
}

REQUIRED: Dict[str, List[str]] = {
    "simulate": ["family", "schedule", "horizon"],
    "stationary": ["family", "n"],
    "mixing": ["family", "n"],
    "classify": ["family", "schedule"],
    "lhagg": ["family", "f", "g"],
    "sweep": [],
    "hitting": ["family", "schedule", "target", "horizon"],
}


def configure_logging(level: str = "INFO") -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}")


def parse_int_range(text) -> List[int]:
    """'1..8' o '1,2,5' -> lista de enteros."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text).strip()
    try:
        if ".." in text:
            low, high = text.split("..", 1)
            return list(range(int(low), int(high) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"rango de enteros inválido: '{text}'") from e


def parse_float_list(text) -> List[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"lista de números inválida: '{text}'") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwogg", description="Paseos aleatorios sobre grafos crecientes: simulación, análisis y verificación"
    )
    parser.add_argument("--config", "-c", help="Archivo YAML con una sección por subcomando")
    parser.add_argument("--output", "-o", help="Directorio de resultados (default: results)")
    parser.add_argument("--log-level", help="Nivel de log (DEBUG, INFO, WARNING...)")
    parser.add_argument("--jobs", type=int, help="Hilos para Monte Carlo, mezcla y barridos")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Serie de retorno R(t), S(T)")
    p.add_argument("--family")
    p.add_argument("--schedule")
    p.add_argument("--horizon", type=int)
    p.add_argument("--mode", choices=["exact", "exact-lumped", "monte-carlo"])
    p.add_argument("--numeric", choices=["float", "exact"])
    p.add_argument("--walkers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--state-cap", type=int)
    p.add_argument("--mixing-slack", action="store_true", default=None,
                   help="Añade la holgura de mezcla a la cota superior del diagnóstico")

    p = sub.add_parser("stationary", help="p(n) cerrado, numérico y cotas")
    p.add_argument("--family")
    p.add_argument("--n", help="Niveles: '1..8' o '1,2,3'")
    p.add_argument("--lumped", action="store_true", default=None)

    p = sub.add_parser("mixing", help="Tiempo de mezcla par frente a la cota analítica")
    p.add_argument("--family")
    p.add_argument("--n")
    p.add_argument("--epsilon", help="Lista de epsilon, p. ej. '0.1,0.01'")
    p.add_argument("--lumped", action="store_true", default=None)

    p = sub.add_parser("classify", help="Veredicto de recurrencia")
    p.add_argument("--family")
    p.add_argument("--schedule")

    p = sub.add_parser("lhagg", help="Dominancia R_f <= R_g")
    p.add_argument("--family")
    p.add_argument("--f", help="Schedule de crecimiento rápido")
    p.add_argument("--g", help="Schedule de crecimiento lento")
    p.add_argument("--horizon", type=int)
    p.add_argument("--method", choices=["exact", "coupling"])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="Barrido de veredictos sobre (base, a, b)")
    p.add_argument("--family", action="append", help="Repetible")
    p.add_argument("--base")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--d1", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--round", choices=["nearest", "ceil"])
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("hitting", help="Visitas a un vértice fijo del hipercubo")
    p.add_argument("--family")
    p.add_argument("--schedule")
    p.add_argument("--target", help="Coordenadas, p. ej. '1,1'")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    return parser


def _merge_options(command: str, args: argparse.Namespace, user_config: Dict) -> Dict:
    section = user_config.get(command, {}) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"la sección '{command}' del archivo de configuración debe ser un mapa")
    options = dict(DEFAULTS[command])
    options.update({str(k).replace("-", "_"): v for k, v in section.items()})
    options.update({k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")})
    missing = [key for key in REQUIRED[command] if options.get(key) in (None, "", [])]
    if missing:
        raise ConfigError(f"faltan opciones para '{command}': {', '.join('--' + m for m in missing)}")
    return options


def _pipeline_args(command: str, options: Dict, config: Dict) -> Dict:
    engine = config.get("engine", {})
    jobs = options.get("jobs") or engine.get("jobs", 1)
    if command == "simulate":
        run = {
            "family": options["family"], "schedule": options["schedule"], "horizon": options["horizon"],
            "mode": options["mode"], "numeric": options["numeric"], "walkers": options.get("walkers"),
            "seed": options.get("seed"), "state_cap": options.get("state_cap") or engine.get("state_cap", 2**22),
            "jobs": jobs, "mixing_slack": bool(options.get("mixing_slack")),
            "output_dir": config.get("output", {}).get("directory", "results"),
        }
        return {"run": run}
    if command in ("stationary", "mixing"):
        args = {"family": options["family"], "levels": parse_int_range(options["n"]),
                "lumped": bool(options.get("lumped")), "jobs": jobs}
        if command == "mixing":
            args["epsilons"] = parse_float_list(options["epsilon"])
        return args
    if command == "classify":
        return {"family": options["family"], "schedule": options["schedule"]}
    if command == "lhagg":
        return {key: options[key] for key in ("family", "f", "g", "horizon", "method", "trials", "seed")}
    if command == "sweep":
        families = options.get("family") or []
        sweep = {
            "families": [families] if isinstance(families, str) else list(families),
            "base": parse_float_list(options["base"]), "a": parse_float_list(options["a"]),
            "b": parse_float_list(options["b"]), "d1": options["d1"], "c": options["c"],
            "rounding": options["round"], "horizon": options["horizon"], "jobs": jobs,
        }
        return {"sweep": sweep}
    return {
        "family": options["family"], "schedule": options["schedule"],
        "target": parse_int_range(options["target"]), "trials": options["trials"],
        "seed": options["seed"], "horizon": options["horizon"],
    }


def _summary(command: str, result: Dict) -> str:
    if command == "simulate":
        series = result["series"]
        rows = [(n, int(T), series.S[int(T)]) for n, T in series.boundaries[-10:]]
        return tabulate(rows, headers=["fase", "T_n", "S(T_n)"], floatfmt=".6g")
    if command in ("stationary", "mixing", "sweep"):
        return tabulate(result["rows"], headers="keys", floatfmt=".6g")
    if command == "classify":
        return tabulate(result["verdict"].model_dump(mode="json").items(), headers=["campo", "valor"])
    if command == "lhagg":
        return tabulate(result["report"].model_dump(mode="json").items(), headers=["campo", "valor"])
    result_h = result["result"]
    return tabulate([("ensayos", result_h.trials), ("fracción con visita", result_h.hit_fraction),
                     ("probabilidad exacta", result["exact_probability"])], headers=["campo", "valor"])


def main(argv: Optional[Sequence[str]] = None, pipeline_factory=None) -> int:
    """Ejecuta un subcomando y devuelve el código de salida (0, 1, 2 o 3)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = RwoggSettings()
    try:
        config, user_config = ConfigLoader(settings)({"user_config_file": args.config})
    except RwoggError as e:
        configure_logging("INFO")
        logger.error(f"❌ {e}")
        return exit_code_for(e)

    if args.output:
        config.setdefault("output", {})["directory"] = args.output
    if args.jobs:
        config.setdefault("engine", {})["jobs"] = args.jobs
    configure_logging(args.log_level or config.get("logging", {}).get("level", "INFO"))

    command = args.command
    try:
        options = _merge_options(command, args, user_config)
        pipeline_args = _pipeline_args(command, options, config)
    except (RwoggError, ValueError, KeyError) as e:
        logger.error(f"❌ {e}")
        return exit_code_for(e)

    exporter = CSVExporter(Path(config.get("output", {}).get("directory", "results")))
    factory = pipeline_factory or PIPELINES[command]
    result = factory(config, exporter).run(pipeline_args)
    if result.get("status") != "completed":
        logger.error(f"❌ {command} falló en '{result.get('failed_at')}': {result.get('error')}")
        if command == "lhagg" and "report" in result:
            print(_summary(command, result))
        return result.get("exit_code", 1)

    print(_summary(command, result))
    for path in result.get("files", []):
        logger.info(f"💾 {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
