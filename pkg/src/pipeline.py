#!/usr/bin/env python3
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator
from wpipe.pipe import Pipeline

from src.analysis import (
    analytic_mixing_bound,
    classify,
    even_stationary_numeric,
    fit_mixing_growth,
    measure_even_mixing,
    mixing_bound_name,
    p_bounds,
    p_closed,
    series_diagnostic,
)
from src.config_loader import mixing_constant
from src.coupling import verify_coupling_sim, verify_lhagg_exact
from src.csv_exporter import CSVExporter, run_metadata
from src.descriptors import parse_family, parse_schedule
from src.engine import (
    RNG_ALGORITHM,
    hitting_experiment,
    hitting_probability_exact,
    run_exact,
    run_monte_carlo,
)
from src.errors import BoundsUndefinedError, FamilyError, NoBoundError, RwoggError, VerificationError, exit_code_for
from src.families import NumericMode, TransitionFamily
from src.schedule import DurationSchedule, Rounding, SymbolicScheduleFamily


class RunConfig(BaseModel):
    """Configuración validada de una ejecución de `simulate`."""

    family: str
    schedule: str
    horizon: int = Field(ge=0)
    mode: Literal["exact", "exact-lumped", "monte-carlo"] = "exact"
    numeric: NumericMode = NumericMode.FLOAT
    walkers: Optional[int] = None
    seed: Optional[int] = None
    state_cap: int = Field(default=2**22, ge=1)
    jobs: int = Field(default=1, ge=1)
    mixing_slack: bool = False
    output_dir: str = "results"

    @model_validator(mode="after")
    def monte_carlo_needs_walkers(self) -> "RunConfig":
        if self.mode == "monte-carlo":
            if self.walkers is None or self.walkers < 1:
                raise ValueError("monte-carlo requiere walkers >= 1")
            if self.seed is None:
                raise ValueError("monte-carlo requiere una semilla")
        return self


class SweepConfig(BaseModel):
    """Rejilla finita (familia x base x a x b); cada celda es reproducible por sí sola."""

    families: List[str] = Field(default_factory=list)
    base: List[float] = Field(default_factory=lambda: [2.0])
    a: List[float] = Field(default_factory=lambda: [0.0])
    b: List[float] = Field(default_factory=lambda: [0.0])
    d1: int = Field(default=1, ge=0)
    c: float = Field(default=1.0, gt=0)
    rounding: Rounding = Rounding.NEAREST
    horizon: int = Field(default=1000, ge=0)
    jobs: int = Field(default=1, ge=1)

    def cells(self) -> List[Dict]:
        return [
            {"family": family, "schedule": SymbolicScheduleFamily(
                base=base, a=a, b=b, d1=self.d1, c=self.c, rounding=self.rounding)}
            for family, base, a, b in product(self.families, self.base, self.a, self.b)
        ]


class CommandPipeline(Pipeline):
    """Base de los subcomandos: pasos secuenciales con el resultado de cada uno como entrada del siguiente."""

    command = "command"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(worker_id=f"rwogg_{self.command}", worker_name=f"RWoGG {self.command}", verbose=True)
        self.config = config
        self.engine = config.get("engine", {})
        self.outputs = config.get("output", {})
        self.exporter = exporter or CSVExporter(Path(self.outputs.get("directory", "results")))
        self.steps = []

    def run(self, args_dict: dict) -> dict:
        """Ejecutar el pipeline completo"""
        logger.info(f"🚀 Iniciando {self.command}")

        current_args = args_dict
        for step_func, step_name in self.steps:
            logger.info(f"📋 Ejecutando: {step_name}")
            try:
                current_args = step_func(current_args)
            except Exception as e:
                logger.error(f"❌ Error en paso '{step_name}': {e}")
                return {
                    **current_args,
                    "status": "failed",
                    "error": str(e),
                    "failed_at": step_name,
                    "exit_code": exit_code_for(e),
                }

        logger.info("🎉 Pipeline completado exitosamente!")
        return {**current_args, "status": "completed", "exit_code": 0}

    def _filename(self, key: str, default: str) -> str:
        return self.outputs.get(f"{key}_filename", default)


class SimulatePipeline(CommandPipeline):
    command = "simulate"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.parse, "Validar configuración y descriptores"),
            (self.simulate, "Calcular la serie de retorno"),
            (self.diagnose, "Diagnóstico por fase"),
            (self.export, "Exportar resultados"),
        ]

    def parse(self, args_dict: dict) -> dict:
        """Paso 1: Validar configuración y descriptores"""
        run_config = RunConfig(**args_dict["run"])
        return {
            **args_dict,
            "run_config": run_config,
            "family": parse_family(run_config.family),
            "schedule": parse_schedule(run_config.schedule),
        }

    def simulate(self, args_dict: dict) -> dict:
        """Paso 2: Evolución exacta o Monte Carlo"""
        rc: RunConfig = args_dict["run_config"]
        family, schedule = args_dict["family"], args_dict["schedule"]
        max_phases = self.engine.get("max_phases", 100_000)
        if rc.mode == "monte-carlo":
            series = run_monte_carlo(
                family, schedule, rc.horizon, walkers=rc.walkers, seed=rc.seed, jobs=rc.jobs,
                block_size=self.engine.get("mc_block_size", 4096), state_cap=rc.state_cap, max_phases=max_phases,
            )
        else:
            series = run_exact(
                family, schedule, rc.horizon, mode=rc.numeric, lumped=rc.mode == "exact-lumped",
                state_cap=rc.state_cap, dense_threshold=self.engine.get("dense_threshold", 2**16),
                max_phases=max_phases,
            )
        logger.info(f"📊 S({rc.horizon}) = {series.S[-1]:.6g} en {len(series.boundaries)} fases completas")
        return {**args_dict, "series": series}

    def diagnose(self, args_dict: dict) -> dict:
        """Paso 3: Incrementos por fase frente a las cotas (solo si p(n) tiene forma cerrada)"""
        family: TransitionFamily = args_dict["family"]
        rc: RunConfig = args_dict["run_config"]
        try:
            p_closed(family, 1)
        except FamilyError:
            logger.info("ℹ️ Sin p(n) cerrado: se omite el diagnóstico")
            return {**args_dict, "diagnostic": None}

        mixing_of = None
        if rc.mixing_slack and family.lumpable and family.is_busy:
            chain = family.lumped()

            @lru_cache(maxsize=None)
            def mixing_of(n: int, epsilon: float) -> int:
                idx, P = chain.build(n, state_cap=rc.state_cap)
                return measure_even_mixing(P, idx.parity, epsilon, start=chain.start_index(n)).measured

        diagnostic = series_diagnostic(
            args_dict["series"], args_dict["schedule"], p_of=lambda n: p_closed(family, n),
            mixing_of=mixing_of, busy=family.is_busy,
        )
        return {**args_dict, "diagnostic": diagnostic}

    def export(self, args_dict: dict) -> dict:
        """Paso 4: series.csv, diagnostic.csv y meta.json"""
        rc: RunConfig = args_dict["run_config"]
        series = args_dict["series"]
        files = [self.exporter.export("series", series.to_frame(), self._filename("series", "series.csv"))]
        if args_dict.get("diagnostic") is not None:
            files.append(self.exporter.export(
                "diagnostic", args_dict["diagnostic"].to_frame(), self._filename("diagnostic", "diagnostic.csv")))
        meta = run_metadata(
            "simulate", rc.model_dump(mode="json"),
            family=args_dict["family"].describe(), schedule=args_dict["schedule"].describe(),
            mode=rc.mode, seed=rc.seed, rng=RNG_ALGORITHM if rc.mode == "monte-carlo" else None,
            state_cap=rc.state_cap, horizon=rc.horizon, run=series.metadata,
        )
        files.append(self.exporter.export_json(meta, self._filename("meta", "meta.json")))
        return {**args_dict, "files": files}


class StationaryPipeline(CommandPipeline):
    command = "stationary"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.parse, "Validar familia"),
            (self.compute, "Calcular p(n) cerrado, numérico y cotas"),
            (self.export, "Exportar stationary.csv"),
        ]

    def parse(self, args_dict: dict) -> dict:
        """Paso 1: Validar familia"""
        return {**args_dict, "family": parse_family(args_dict["family"])}

    def compute(self, args_dict: dict) -> dict:
        """Paso 2: p(n) para cada nivel del rango"""
        family: TransitionFamily = args_dict["family"]
        chain = family.lumped() if args_dict.get("lumped") and family.lumpable else family
        tolerance = self.config.get("tolerances", {}).get("stationary", 1e-12)
        rows = []
        for n in args_dict["levels"]:
            row = {"n": n, "p_closed": None, "p_numeric": None, "lower": None, "upper": None}
            try:
                row["p_closed"] = p_closed(family, n)
            except FamilyError:
                pass
            idx, P = chain.build(n, state_cap=self.engine.get("state_cap", 2**22))
            # cadenas perezosas: P^2 sobre todos los estados tiene el mismo punto fijo que P
            parity = idx.parity if chain.is_busy else np.zeros(idx.size, dtype=np.int8)
            row["p_numeric"] = even_stationary_numeric(P, parity, start=chain.start_index(n), tolerance=tolerance * 0.1).p
            try:
                row["lower"], row["upper"] = p_bounds(family, n)
            except BoundsUndefinedError:
                pass
            rows.append(row)
        return {**args_dict, "rows": rows}

    def export(self, args_dict: dict) -> dict:
        """Paso 3: Exportar stationary.csv"""
        path = self.exporter.export("stationary", args_dict["rows"], self._filename("stationary", "stationary.csv"))
        return {**args_dict, "files": [path]}


class MixingPipeline(CommandPipeline):
    command = "mixing"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.parse, "Validar familia"),
            (self.measure, "Medir tiempos de mezcla pares"),
            (self.fit, "Ajustar crecimiento"),
            (self.export, "Exportar mixing.csv"),
        ]

    def parse(self, args_dict: dict) -> dict:
        """Paso 1: Validar familia (la medición usa la cadena agregada si se pide)"""
        family = parse_family(args_dict["family"])
        chain = family.lumped() if args_dict.get("lumped") and family.lumpable else family
        return {**args_dict, "family": family, "chain": chain}

    def measure(self, args_dict: dict) -> dict:
        """Paso 2: tiempo medido y cota analítica por (n, epsilon)"""
        chain: TransitionFamily = args_dict["chain"]
        try:
            name = mixing_bound_name(chain)
            constant, calibrated = mixing_constant(self.config, name)
        except NoBoundError:
            name, constant, calibrated = None, None, False
        max_steps = self.config.get("mixing", {}).get("max_steps", 200_000)
        rows = []
        for n in args_dict["levels"]:
            idx, P = chain.build(n, state_cap=self.engine.get("state_cap", 2**22))
            for epsilon in args_dict["epsilons"]:
                estimate = measure_even_mixing(P, idx.parity, epsilon, start=chain.start_index(n),
                                               max_steps=max_steps, jobs=args_dict.get("jobs", 1))
                bound = analytic_mixing_bound(chain, n, epsilon, {name: constant}) if name else None
                rows.append({
                    "n": n, "epsilon": epsilon, "measured": estimate.measured, "bound": bound,
                    "ratio": estimate.measured / bound if bound else None,
                })
        return {**args_dict, "rows": rows, "bound_name": name, "constant": constant, "calibrated": calibrated}

    def fit(self, args_dict: dict) -> dict:
        """Paso 3: constante ajustada y pendiente log-log frente a la forma de la cota"""
        rows = [row for row in args_dict["rows"] if row["bound"]]
        fitted, slope = None, None
        if len(rows) >= 2:
            shapes = [row["bound"] / args_dict["constant"] for row in rows]
            fitted, slope = fit_mixing_growth(shapes, [row["measured"] for row in rows])
            logger.info(f"📊 Constante ajustada {fitted:.4g}, pendiente log-log {slope:.4g}")
        return {**args_dict, "fitted_constant": fitted, "slope": slope}

    def export(self, args_dict: dict) -> dict:
        """Paso 4: mixing.csv y mixing_meta.json"""
        path = self.exporter.export("mixing", args_dict["rows"], self._filename("mixing", "mixing.csv"))
        meta = run_metadata(
            "mixing", {"levels": list(args_dict["levels"]), "epsilons": list(args_dict["epsilons"])},
            family=args_dict["chain"].describe(), bound=args_dict["bound_name"],
            constant=args_dict["constant"], calibrated=args_dict["calibrated"],
            fitted_constant=args_dict["fitted_constant"], slope=args_dict["slope"],
        )
        meta_path = self.exporter.export_json(meta, "mixing_meta.json")
        return {**args_dict, "files": [path, meta_path]}


class ClassifyPipeline(CommandPipeline):
    command = "classify"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.classify, "Clasificar recurrencia"),
            (self.export, "Exportar verdict.json"),
        ]

    def classify(self, args_dict: dict) -> dict:
        """Paso 1: Veredicto del teorema aplicable"""
        verdict = classify(parse_family(args_dict["family"]), parse_schedule(args_dict["schedule"]))
        logger.info(f"⚖️ {verdict.family} con {verdict.schedule}: {verdict.verdict.value} ({verdict.theorem})")
        return {**args_dict, "verdict": verdict}

    def export(self, args_dict: dict) -> dict:
        """Paso 2: Exportar verdict.json"""
        payload = args_dict["verdict"].model_dump(mode="json")
        path = self.exporter.export_json(payload, self._filename("verdict", "verdict.json"))
        return {**args_dict, "files": [path]}


class LhaggPipeline(CommandPipeline):
    command = "lhagg"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None, coupling=None):
        super().__init__(config, exporter)
        self.coupling = coupling
        self.steps = [
            (self.verify, "Verificar dominancia"),
            (self.export, "Exportar dominance.json"),
            (self.check, "Comprobar resultado"),
        ]

    def verify(self, args_dict: dict) -> dict:
        """Paso 1: evolución exacta o trayectorias acopladas"""
        family = parse_family(args_dict["family"])
        f, g = parse_schedule(args_dict["f"]), parse_schedule(args_dict["g"])
        tolerance = self.config.get("tolerances", {}).get("dominance", 1e-12)
        if args_dict.get("method", "exact") == "coupling":
            dump = self.exporter._path(self._filename("trajectory", "failing_trajectory.csv"))
            report = verify_coupling_sim(
                family, f, g, args_dict["horizon"], trials=args_dict.get("trials", 10_000),
                seed=args_dict.get("seed", 0), coupling=self.coupling, dump_path=dump,
            )
        else:
            report = verify_lhagg_exact(family, f, g, args_dict["horizon"], tolerance=tolerance,
                                        state_cap=self.engine.get("state_cap", 2**22))
        return {**args_dict, "report": report}

    def export(self, args_dict: dict) -> dict:
        """Paso 2: Exportar dominance.json"""
        payload = args_dict["report"].model_dump(mode="json")
        path = self.exporter.export_json(payload, self._filename("dominance", "dominance.json"))
        return {**args_dict, "files": [path]}

    def check(self, args_dict: dict) -> dict:
        """Paso 3: una verificación fallida termina con código 1"""
        report = args_dict["report"]
        if not report.passed:
            raise VerificationError(f"dominancia violada: máximo {report.max_violation:.3e}")
        return args_dict


class SweepPipeline(CommandPipeline):
    command = "sweep"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.parse, "Enumerar la rejilla"),
            (self.run_cells, "Ejecutar celdas"),
            (self.export, "Exportar sweep.csv"),
        ]

    def parse(self, args_dict: dict) -> dict:
        """Paso 1: Enumerar la rejilla"""
        sweep = SweepConfig(**args_dict["sweep"])
        cells = sweep.cells()
        logger.info(f"🧮 {len(cells)} celdas en la rejilla")
        return {**args_dict, "sweep_config": sweep, "cells": cells}

    def _cell(self, cell: Dict, horizon: int) -> Dict:
        schedule = DurationSchedule.symbolic(cell["schedule"])
        row = {"family_params": cell["family"], "schedule_params": schedule.describe(), "verdict": None,
               "S_at_last_phase": None, "phases_computed": 0, "error": None}
        try:
            family = parse_family(cell["family"])
            row["verdict"] = classify(family, schedule).verdict.value
            series = run_exact(family, schedule, horizon, lumped=family.lumpable,
                               state_cap=self.engine.get("state_cap", 2**22),
                               max_phases=self.engine.get("max_phases", 100_000))
            row["phases_computed"] = len(series.boundaries)
            if series.boundaries:
                row["S_at_last_phase"] = series.S[int(series.boundaries[-1][1])]
        except RwoggError as e:
            logger.warning(f"⚠️ Celda {cell['family']} / {schedule.describe()}: {e}")
            row["error"] = str(e)
        return row

    def run_cells(self, args_dict: dict) -> dict:
        """Paso 2: cada celda es independiente; los errores quedan en su fila"""
        sweep: SweepConfig = args_dict["sweep_config"]
        cells = args_dict["cells"]
        if sweep.jobs > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=sweep.jobs) as executor:
                rows = list(executor.map(lambda cell: self._cell(cell, sweep.horizon), cells))
        else:
            rows = [self._cell(cell, sweep.horizon) for cell in cells]
        return {**args_dict, "rows": rows}

    def export(self, args_dict: dict) -> dict:
        """Paso 3: Exportar sweep.csv"""
        path = self.exporter.export("sweep", args_dict["rows"], self._filename("sweep", "sweep.csv"))
        return {**args_dict, "files": [path]}


class HittingPipeline(CommandPipeline):
    command = "hitting"

    def __init__(self, config: Dict, exporter: Optional[CSVExporter] = None):
        super().__init__(config, exporter)
        self.steps = [
            (self.experiment, "Ejecutar ensayos de visita"),
            (self.oracle, "Probabilidad exacta de visita"),
            (self.export, "Exportar hitting.csv"),
        ]

    def experiment(self, args_dict: dict) -> dict:
        """Paso 1: primer tiempo de visita por ensayo"""
        family, schedule = parse_family(args_dict["family"]), parse_schedule(args_dict["schedule"])
        result = hitting_experiment(
            family, schedule, args_dict["target"], trials=args_dict["trials"], seed=args_dict["seed"],
            horizon=args_dict["horizon"], state_cap=self.engine.get("state_cap", 2**22),
        )
        logger.info(f"🎯 {result.hit_fraction:.1%} de los ensayos visitan {result.target}")
        return {**args_dict, "family_model": family, "schedule_model": schedule, "result": result}

    def oracle(self, args_dict: dict) -> dict:
        """Paso 2: evolución absorbente en el mismo horizonte"""
        probability = hitting_probability_exact(
            args_dict["family_model"], args_dict["schedule_model"], args_dict["target"], args_dict["horizon"],
            state_cap=self.engine.get("state_cap", 2**22),
        )
        return {**args_dict, "exact_probability": float(probability)}

    def export(self, args_dict: dict) -> dict:
        """Paso 3: hitting.csv y meta.json"""
        result = args_dict["result"]
        rows = [{"trial": i, "first_hit": hit} for i, hit in enumerate(result.first_hits)]
        path = self.exporter.export("hitting", rows, self._filename("hitting", "hitting.csv"))
        meta = run_metadata(
            "hitting", {"trials": result.trials, "horizon": result.horizon},
            family=args_dict["family_model"].describe(), schedule=args_dict["schedule_model"].describe(),
            target=list(result.target), target_level=result.target_level, seed=result.seed, rng=RNG_ALGORITHM,
            hit_fraction=result.hit_fraction, exact_probability=args_dict["exact_probability"],
        )
        meta_path = self.exporter.export_json(meta, self._filename("meta", "meta.json"))
        return {**args_dict, "files": [path, meta_path]}


PIPELINES = {
    "simulate": SimulatePipeline,
    "stationary": StationaryPipeline,
    "mixing": MixingPipeline,
    "classify": ClassifyPipeline,
    "lhagg": LhaggPipeline,
    "sweep": SweepPipeline,
    "hitting": HittingPipeline,
}
