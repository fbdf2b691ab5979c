import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from loguru import logger

ARTIFACT_VERSION = "1.0.0"

# Orden fijo de columnas por artefacto
COLUMNS: Dict[str, List[str]] = {
    "series": ["t", "R", "S", "phase"],
    "diagnostic": ["phase", "d_n", "p_n", "increment", "lower_bound", "upper_bound", "complete"],
    "stationary": ["n", "p_closed", "p_numeric", "lower", "upper"],
    "mixing": ["n", "epsilon", "measured", "bound", "ratio"],
    "sweep": ["family_params", "schedule_params", "verdict", "S_at_last_phase", "phases_computed", "error"],
    "hitting": ["trial", "first_hit"],
}

OPTIONAL_COLUMNS: Dict[str, List[str]] = {"series": ["stderr"]}


class CSVExporter:
    def __init__(self, results_dir: Optional[Path] = None):
        self.results_dir = Path(results_dir) if results_dir is not None else None

    def __call__(self, args_dict: Dict) -> str:
        """Escribe el artefacto `artifact` (DataFrame o filas) en results_dir/filename."""
        if self.results_dir is None:
            self.results_dir = Path(args_dict.get("results_dir", "results"))
        self.results_dir.mkdir(parents=True, exist_ok=True)
        return self.export(args_dict["artifact"], args_dict["data"], args_dict["filename"])

    def export(self, artifact: str, data: Any, filename: str) -> str:
        """CSV con punto decimal, fin de línea '\\n' y floats en %.17g."""
        df = data if isinstance(data, pd.DataFrame) else pd.DataFrame(list(data))
        columns = COLUMNS[artifact] + [c for c in OPTIONAL_COLUMNS.get(artifact, []) if c in df.columns]

        # Columnas ausentes quedan vacías
        for col in columns:
            if col not in df.columns:
                df[col] = None
        df = df[columns]

        csv_path = self._path(filename)
        df.to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.17g")
        logger.info(f"💾 CSV exportado: {csv_path} ({len(df)} filas)")
        return str(csv_path)

    def export_json(self, payload: Dict, filename: str) -> str:
        json_path = self._path(filename)
        json_path.write_text(json.dumps(payload, indent=2, ensure_ascii=False, default=str) + "\n", encoding="utf-8")
        logger.info(f"💾 JSON exportado: {json_path}")
        return str(json_path)

    def _path(self, filename: str) -> Path:
        if self.results_dir is None:
            self.results_dir = Path("results")
        self.results_dir.mkdir(parents=True, exist_ok=True)
        return self.results_dir / filename


def run_metadata(command: str, config_echo: Dict, **fields) -> Dict:
    """meta.json: versión, comando, eco de configuración; generated_at es el único campo variable."""
    return {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        **fields,
        "config": config_echo,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }
