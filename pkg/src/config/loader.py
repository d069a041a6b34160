"""
Scenario config loading and validation.

Configs are JSON documents with ``schema_version`` 1. Devices and TLS's may
name a row of config/devices.json and override it field by field.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from src.core.composite_system import DeviceParams, DriveParams, HilbertSpec, TlsParams
from src.core.errors import ConfigError, ParameterError
from src.core.floquet import SolverOptions
from src.core.fluxonium import level_index, level_label

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEVICE_CATALOG = Path(__file__).resolve().parents[2] / "config" / "devices.json"

DEVICE_KEYS = {"e_j", "e_c", "e_l", "phi_ext", "g", "omega_r", "kappa", "chi", "name"}
TLS_KEYS = {"delta_tls", "g_tls", "temperature", "photon_order"}
DRIVE_KEYS = {"epsilon", "omega_d"}
HILBERT_KEYS = {"n_flux", "n_fock", "n_sidebands", "basis_size"}
SWEEP_KEYS = {"epsilon_grid", "n_bar_targets", "omega_r_grid", "initial_states", "phi_ext_list"}
BRANCH_KEYS = {"epsilon", "n_levels_tracked", "n_max", "omega_d"}


def _check_number(value, name: str, minimum: float = 0.0):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(f"must be a number, got {value!r}", field=name)
    if value < minimum:
        raise ParameterError(f"must be >= {minimum:g}", field=name)


def _check_int(value, name: str, minimum: int):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParameterError(f"must be an integer, got {value!r}", field=name)
    if value < minimum:
        raise ParameterError(f"must be >= {minimum}", field=name)


@dataclass
class SweepConfig:
    epsilon_grid: List[float] = field(default_factory=list)
    n_bar_targets: List[float] = field(default_factory=list)
    omega_r_grid: List[float] = field(default_factory=list)
    initial_states: List[str] = field(default_factory=lambda: ["g", "e"])
    phi_ext_list: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class BranchConfig:
    epsilon: float = 0.0
    n_levels_tracked: int = 6
    n_max: Optional[int] = None
    omega_d: float = 0.0

    def __post_init__(self):
        _check_number(self.epsilon, "epsilon")
        _check_int(self.n_levels_tracked, "n_levels_tracked", 1)
        if self.n_max is not None:
            _check_int(self.n_max, "n_max", 1)
        _check_number(self.omega_d, "omega_d")

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class Scenario:
    name: str
    device: DeviceParams
    hilbert: HilbertSpec
    tls: Optional[TlsParams] = None
    drive: DriveParams = field(default_factory=DriveParams)
    solver: SolverOptions = field(default_factory=SolverOptions)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    branch: BranchConfig = field(default_factory=BranchConfig)

    def flux_variants(self) -> List["Scenario"]:
        """One scenario per entry of ``sweep.phi_ext_list`` (itself when the list is empty)."""
        if not self.sweep.phi_ext_list:
            return [self]
        variants = []
        for phi in self.sweep.phi_ext_list:
            variants.append(Scenario(
                name=f"{self.name}_phi{phi:g}",
                device=self.device.replace(phi_ext=float(phi)),
                hilbert=self.hilbert, tls=self.tls, drive=self.drive, solver=self.solver,
                sweep=SweepConfig(self.sweep.epsilon_grid, self.sweep.n_bar_targets,
                                  self.sweep.omega_r_grid, self.sweep.initial_states, []),
                branch=self.branch,
            ))
        return variants

    def to_dict(self) -> Dict:
        hilbert = self.hilbert.to_dict()
        hilbert.pop("tls_present")
        return {
            "name": self.name,
            "device": self.device.to_dict(),
            "tls": self.tls.to_dict() if self.tls else None,
            "drive": self.drive.to_dict(),
            "hilbert": hilbert,
            "solver": self.solver.to_dict(),
            "sweep": self.sweep.to_dict(),
            "branch": self.branch.to_dict(),
        }


@dataclass
class StatsConfig:
    n_components: int = 2
    covariance_type: str = "tied"
    n_samples: int = 1000
    sample_size: int = 20000
    seed: int = 0
    error_correction: bool = True
    # row of devices.json "readout_errors"; measured rates replace the fitted SNR ones
    readout_errors: Optional[str] = None

    def __post_init__(self):
        if self.n_components not in (2, 3):
            raise ParameterError("must be 2 or 3", field="n_components")
        if self.covariance_type not in ("tied", "full"):
            raise ParameterError("must be 'tied' or 'full'", field="covariance_type")
        _check_int(self.n_samples, "n_samples", 1)
        _check_int(self.sample_size, "sample_size", 1)
        _check_int(self.seed, "seed", 0)
        if not isinstance(self.error_correction, bool):
            raise ParameterError("must be true or false", field="error_correction")
        if self.readout_errors is not None and not isinstance(self.readout_errors, str):
            raise ParameterError("must be a catalog row name", field="readout_errors")

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass
class CalibrationConfig:
    device: Optional[DeviceParams] = None
    delta: float = 0.0
    data_path: Optional[str] = None
    kerr: Optional[float] = None
    powers: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "device": self.device.to_dict() if self.device else None,
            "delta": self.delta,
            "data_path": self.data_path,
            "kerr": self.kerr,
            "powers": list(self.powers),
        }


@dataclass
class RunConfig:
    scenarios: List[Scenario] = field(default_factory=list)
    stats: StatsConfig = field(default_factory=StatsConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    source: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "stats": self.stats.to_dict(),
            "calibration": self.calibration.to_dict(),
        }


def load_device_catalog(path: Optional[Path] = None) -> Dict[str, Any]:
    path = Path(path) if path else DEVICE_CATALOG
    if not path.exists():
        logger.debug("no device catalog at %s", path)
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class _Collector:
    """Accumulates field-level problems instead of stopping at the first."""

    def __init__(self):
        self.problems: List[str] = []

    def add(self, where: str, message: str):
        self.problems.append(f"{where}: {message}")

    def build(self, where: str, factory: Callable, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except ParameterError as exc:
            key = f"{where}.{exc.field}" if exc.field else where
            self.add(key, str(exc))
        except (KeyError, TypeError) as exc:
            self.add(where, f"missing or malformed field ({exc})")
        return None

    def unknown(self, where: str, data: Dict, allowed: set):
        for key in sorted(set(data) - allowed):
            self.add(f"{where}.{key}", "unknown key")


def _catalog_row(value, section: str, catalog: Dict, where: str, allowed: set, errors: _Collector) -> Optional[Dict]:
    if value is None:
        return None
    if isinstance(value, str):
        value = {"row": value}
    if not isinstance(value, dict):
        errors.add(where, "must be an object or a catalog row name")
        return None
    data = dict(value)
    row = data.pop("row", None)
    if row is not None:
        rows = catalog.get(section, {})
        if row not in rows:
            errors.add(f"{where}.row", f"unknown catalog row {row!r}")
            return None
        merged = {k: v for k, v in rows[row].items() if k in allowed}
        if section == "devices":
            merged.setdefault("name", row)
        merged.update(data)
        data = merged
    errors.unknown(where, data, allowed)
    return data


def _device(value, catalog: Dict, where: str, errors: _Collector) -> Optional[DeviceParams]:
    data = _catalog_row(value, "devices", catalog, where, DEVICE_KEYS, errors)
    if data is None:
        if value is None:
            errors.add(where, "is required")
        return None
    return errors.build(where, DeviceParams.from_dict, data)


def _number_list(value, where: str, errors: _Collector) -> List[float]:
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        errors.add(where, "must be a list of numbers")
        return []
    return [float(v) for v in value]


def _sweep(data: Dict, where: str, errors: _Collector) -> SweepConfig:
    errors.unknown(where, data, SWEEP_KEYS)
    sweep = SweepConfig(
        epsilon_grid=_number_list(data.get("epsilon_grid"), f"{where}.epsilon_grid", errors),
        n_bar_targets=_number_list(data.get("n_bar_targets"), f"{where}.n_bar_targets", errors),
        omega_r_grid=_number_list(data.get("omega_r_grid"), f"{where}.omega_r_grid", errors),
        phi_ext_list=_number_list(data.get("phi_ext_list"), f"{where}.phi_ext_list", errors),
    )
    if any(e < 0 for e in sweep.epsilon_grid):
        errors.add(f"{where}.epsilon_grid", "must be >= 0")
    if any(n < 0 for n in sweep.n_bar_targets):
        errors.add(f"{where}.n_bar_targets", "must be >= 0")
    if "initial_states" in data:
        try:
            sweep.initial_states = [level_label(level_index(s)) for s in data["initial_states"]]
        except (ParameterError, TypeError) as exc:
            errors.add(f"{where}.initial_states", str(exc))
    return sweep


def _scenario(data: Dict, index: int, catalog: Dict, errors: _Collector) -> Optional[Scenario]:
    where = f"scenarios[{index}]"
    if not isinstance(data, dict):
        errors.add(where, "must be an object")
        return None
    errors.unknown(where, data, {"name", "device", "tls", "drive", "hilbert", "solver", "sweep", "branch"})

    device = _device(data.get("device"), catalog, f"{where}.device", errors)
    tls_data = _catalog_row(data.get("tls"), "tls", catalog, f"{where}.tls", TLS_KEYS, errors)
    tls = errors.build(f"{where}.tls", TlsParams.from_dict, tls_data) if tls_data is not None else None

    drive_data = data.get("drive", {})
    errors.unknown(f"{where}.drive", drive_data, DRIVE_KEYS)
    drive = errors.build(f"{where}.drive", DriveParams, **{k: v for k, v in drive_data.items() if k in DRIVE_KEYS})

    hilbert_data = {k: v for k, v in data.get("hilbert", {}).items()}
    errors.unknown(f"{where}.hilbert", hilbert_data, HILBERT_KEYS)
    hilbert = errors.build(f"{where}.hilbert", HilbertSpec, tls_present=tls is not None,
                           **{k: v for k, v in hilbert_data.items() if k in HILBERT_KEYS})

    solver_data = data.get("solver", {})
    solver_keys = set(SolverOptions.__dataclass_fields__)
    errors.unknown(f"{where}.solver", solver_data, solver_keys)
    solver = errors.build(f"{where}.solver", SolverOptions, **{k: v for k, v in solver_data.items() if k in solver_keys})

    sweep = _sweep(data.get("sweep", {}), f"{where}.sweep", errors)

    branch_data = data.get("branch", {})
    errors.unknown(f"{where}.branch", branch_data, BRANCH_KEYS)
    branch = errors.build(f"{where}.branch", BranchConfig, **{k: v for k, v in branch_data.items() if k in BRANCH_KEYS})

    if None in (device, drive, hilbert, solver, branch):
        return None
    return Scenario(data.get("name", f"scenario_{index}"), device, hilbert, tls, drive, solver, sweep, branch)


def parse_config(data: Dict, catalog: Optional[Dict] = None, source: Optional[str] = None) -> RunConfig:
    """Validate a config document; raises ConfigError listing every offending field."""
    catalog = load_device_catalog() if catalog is None else catalog
    errors = _Collector()
    if not isinstance(data, dict):
        raise ConfigError(["<root>: must be a JSON object"])
    if data.get("schema_version") != SCHEMA_VERSION:
        errors.add("schema_version", f"must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    errors.unknown("<root>", data, {"schema_version", "scenarios", "stats", "calibration"})

    scenarios = []
    raw_scenarios = data.get("scenarios", [])
    if not isinstance(raw_scenarios, list):
        errors.add("scenarios", "must be a list")
        raw_scenarios = []
    for index, item in enumerate(raw_scenarios):
        scenario = _scenario(item, index, catalog, errors)
        if scenario is not None:
            scenarios.append(scenario)

    stats_data = data.get("stats", {})
    errors.unknown("stats", stats_data, set(StatsConfig.__dataclass_fields__))
    stats = errors.build("stats", StatsConfig,
                         **{k: v for k, v in stats_data.items() if k in StatsConfig.__dataclass_fields__})

    cal_data = dict(data.get("calibration", {}))
    errors.unknown("calibration", cal_data, {"device", "delta", "data_path", "kerr", "powers"})
    cal_device = (_device(cal_data["device"], catalog, "calibration.device", errors)
                  if cal_data.get("device") is not None else None)
    delta = cal_data.get("delta", 0.0)
    if isinstance(delta, bool) or not isinstance(delta, (int, float)):
        errors.add("calibration.delta", f"must be a number, got {delta!r}")
        delta = 0.0
    calibration = CalibrationConfig(
        device=cal_device,
        delta=float(delta),
        data_path=cal_data.get("data_path"),
        kerr=cal_data.get("kerr"),
        powers=_number_list(cal_data.get("powers"), "calibration.powers", errors),
    )

    if errors.problems:
        raise ConfigError(errors.problems)
    return RunConfig(scenarios, stats, calibration, source)


def load_config(path, catalog: Optional[Dict] = None) -> RunConfig:
    """Read and validate a config file. Missing files raise OSError; bad JSON raises ConfigError."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: invalid JSON ({exc})"]) from exc
    config = parse_config(data, catalog, str(path))
    logger.info("loaded %d scenario(s) from %s", len(config.scenarios), path)
    return config
