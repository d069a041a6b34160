# Data Loaders - Functions for reading inputs and writing plot-ready results

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from src.analysis.calibration import StarkDataset
from src.analysis.readout_stats import ShotTable
from src.core.composite_system import DeviceParams
from src.core.errors import ParameterError, StatsError

logger = logging.getLogger(__name__)

SHOT_COLUMNS = ["rep_index", "i_init", "q_init", "i_final", "q_final"]
STARK_COLUMNS = ["p_rf_watts", "f_q_ghz"]


class ResultLoader:
    """
    Handles loading of measurement inputs and saving of simulation outputs
    """

    @staticmethod
    def save_frame(frame: pd.DataFrame, save_path) -> Path:
        """
        Write a DataFrame as CSV with full float precision

        Args:
            frame: Table to write
            save_path: Destination file

        Returns:
            Path of the written file
        """
        save_path = Path(save_path)
        save_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(save_path, index=False, float_format="%.17g")
        logger.info("table saved to %s (%d rows)", save_path, len(frame))
        return save_path

    @staticmethod
    def save_json(data: Dict[str, Any], save_path) -> Path:
        save_path = Path(save_path)
        save_path.parent.mkdir(parents=True, exist_ok=True)
        with open(save_path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(data), f, indent=2, ensure_ascii=False)
        logger.info("json saved to %s", save_path)
        return save_path

    @staticmethod
    def load_json(load_path) -> Dict[str, Any]:
        with open(load_path, "r", encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def load_shots(load_path) -> ShotTable:
        """
        Load paired single-shot records

        Args:
            load_path: CSV with columns rep_index, i_init, q_init, i_final, q_final

        Returns:
            ShotTable with the initial and final IQ points
        """
        frame = pd.read_csv(load_path)
        if frame.isna().any().any():
            raise StatsError(f"shot file {load_path} contains missing values")
        if "rep_index" in frame.columns:
            frame = frame.sort_values("rep_index", kind="stable")
        shots = ShotTable.from_frame(frame)
        logger.info("loaded %d shots from %s", shots.n_shots, load_path)
        return shots

    @staticmethod
    def save_shots(shots: ShotTable, save_path) -> Path:
        return ResultLoader.save_frame(shots.to_frame()[SHOT_COLUMNS], save_path)

    @staticmethod
    def load_stark_data(load_path, device: DeviceParams, delta: float = 0.0) -> StarkDataset:
        """Stark-shift CSV with columns p_rf_watts and f_q_ghz."""
        frame = pd.read_csv(load_path)
        missing = set(STARK_COLUMNS) - set(frame.columns)
        if missing:
            raise ParameterError(f"Stark file {load_path} is missing columns {sorted(missing)}", field="data_path")
        return StarkDataset(frame["p_rf_watts"].to_numpy(), frame["f_q_ghz"].to_numpy(), device, delta)

    @staticmethod
    def save_stark_data(data: StarkDataset, save_path) -> Path:
        frame = pd.DataFrame({"p_rf_watts": data.p_rf, "f_q_ghz": data.f_q})
        return ResultLoader.save_frame(frame, save_path)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def list_run_directories(base_directory: str) -> List[Dict[str, Any]]:
    """
    List run directories that contain a manifest

    Args:
        base_directory: Directory holding one subdirectory per run

    Returns:
        List of run descriptions, newest first
    """
    runs = []
    if not os.path.exists(base_directory):
        return runs
    for entry in sorted(Path(base_directory).iterdir()):
        manifest = entry / "manifest.json"
        if entry.is_dir() and manifest.exists():
            try:
                data = ResultLoader.load_json(manifest)
            except (OSError, json.JSONDecodeError) as e:
                logger.warning("unreadable manifest %s: %s", manifest, e)
                continue
            runs.append({
                "run_id": entry.name,
                "command": data.get("command"),
                "created": data.get("created"),
                "n_outputs": len(data.get("outputs", {})),
                "path": str(entry),
            })
    runs.sort(key=lambda r: r.get("created") or "", reverse=True)
    return runs
