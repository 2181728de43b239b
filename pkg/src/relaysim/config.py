"""Scenario configuration documents: schema, defaults, presets, round-tripping.

A configuration is a single JSON document with a schema_version field and
flat keys carrying explicit units in their names.  Unknown keys are
rejected (keys starting with "_" are annotation entries and are ignored);
missing keys take the documented defaults.  parse -> serialize -> parse is
the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .components import (
    ChipLayout,
    ConfigurationError,
    CouplerModel,
    DetectorModel,
    FilterModel,
    SpdcSource,
    calibrate_coupler,
)
from .linkbudget import LinkParams
from .montecarlo import Scenario
from .units import SpectralMode

SCHEMA_VERSION = 1

PRESET_NAMES = ("paper-fig2", "paper-fig3", "paper-fig4", "paper-fig5", "paper-fig6")

_MAP_GRID = tuple(round(0.005 * i, 3) for i in range(1, 21))


@dataclass(frozen=True)
class ScenarioConfig:
    """Versioned, flat configuration mirroring all model parameters."""

    schema_version: int = SCHEMA_VERSION

    # Pump and gating
    pump_repetition_rate_hz: float = 76e6
    pump_duration_ps: float = 2.5
    gate_rate_hz: float = 600e3
    detector_gate_window_ns: float = 1.0

    # Pair sources (mean pairs per pulse = pairs_per_mw * pump_power_mw)
    external_pairs_per_mw: float = 0.05 / 1.5
    external_pump_power_mw: float = 1.5
    chip_pairs_per_mw: float = 0.02 / 7.0
    chip_pump_power_mw: float = 7.0
    pair_number_cutoff: int = 20

    # Spectra
    spdc_center_wavelength_nm: float = 1532.0
    spdc_fwhm_nm: float = 80.0
    spdc_lineshape: str = "sinc_squared"
    photon_center_wavelength_nm: float = 1530.0
    photon_fwhm_pm: float = 200.0
    photon_lineshape: str = "gaussian"
    dip_fwhm_time_ps: float | None = None
    delay_mm: float = 0.0

    # Electro-optic couplers
    coupler_interaction_length_mm: float = 9.0
    coupler_kappa_lc_rad: float = math.pi / 2.0
    coupler_c1_anchors: tuple[tuple[float, float], ...] = ((0.0, 1.0), (30.0, 0.5))
    coupler_c2_anchors: tuple[tuple[float, float], ...] = ((0.0, 1.0), (30.0, 0.5))
    coupler_c1_voltage_v: float = 30.0
    coupler_c2_voltage_v: float = 30.0

    # Chip losses
    loss_fiber_to_chip_db: float = 3.0
    loss_chip_to_fiber_db: float = 3.0
    loss_propagation_front_db: float = 1.25
    loss_propagation_back_db: float = 1.25
    measured_insertion_loss_db: float | None = None
    alice_arm_loss_db: float = 0.0
    monitor_arm_loss_db: float = 0.0

    # Filters
    filter_ab_center_nm: float = 1530.0
    filter_ab_fwhm_pm: float = 200.0
    filter_ab_insertion_loss_db: float = 0.0
    filter_c_center_nm: float = 1534.0
    filter_c_fwhm_pm: float = 800.0
    filter_c_insertion_loss_db: float = 0.0

    # Apparatus detectors
    detector_efficiency: float = 0.10
    detector_dark_prob_per_ns: float = 1e-5
    monitor_enabled: bool = False

    # Link budget
    fiber_loss_db_per_km: float = 0.2
    link_detector_efficiency: float = 0.10
    link_dark_prob_per_ns: float = 1e-6
    link_gate_window_ns: float = 1.0
    link_pulse_rate_hz: float = 76e6
    mean_photon_per_pulse: float = 1.0
    relay_pair_mean: float = 1.0
    teleport_fidelity: float = 0.8
    chip_insertion_loss_db: float = 9.0
    relay_position: float | None = None
    sweep_min_km: float = 0.0
    sweep_max_km: float = 500.0
    sweep_step_km: float = 5.0

    # Visibility map grids
    map_na_values: tuple[float, ...] = _MAP_GRID
    map_nb_values: tuple[float, ...] = _MAP_GRID
    map_herald_efficiency: float | None = None
    map_herald_dark_prob: float = 0.0

    # Dip scan
    dip_scan_min_mm: float = -9.0
    dip_scan_max_mm: float = 9.0
    dip_scan_points: int = 13

    # Spectrum output grid
    spectrum_min_nm: float = 1430.0
    spectrum_max_nm: float = 1634.0
    spectrum_points: int = 409

    # Coupler curve output grid
    coupler_curve_min_v: float = 0.0
    coupler_curve_max_v: float = 60.0
    coupler_curve_points: int = 121

    # ------------------------------------------------------------------
    # Model builders
    # ------------------------------------------------------------------

    def chip_layout(self) -> ChipLayout:
        return ChipLayout(
            segments={
                "fiber_to_chip": self.loss_fiber_to_chip_db,
                "chip_to_fiber": self.loss_chip_to_fiber_db,
                "prop_front": self.loss_propagation_front_db,
                "prop_back": self.loss_propagation_back_db,
            },
            measured_insertion_db=self.measured_insertion_loss_db,
        )

    def coupler(self, anchors) -> CouplerModel:
        cal = calibrate_coupler(
            anchors,
            kappa_lc_rad=self.coupler_kappa_lc_rad,
            interaction_length_mm=self.coupler_interaction_length_mm,
        )
        return cal.model

    def detector(self) -> DetectorModel:
        return DetectorModel(
            efficiency=self.detector_efficiency,
            dark_prob_per_ns=self.detector_dark_prob_per_ns,
            gate_window_ns=self.detector_gate_window_ns,
            gate_rate_hz=self.gate_rate_hz,
        )

    def spdc_mode(self) -> SpectralMode:
        return SpectralMode(
            self.spdc_center_wavelength_nm, self.spdc_fwhm_nm * 1e3, self.spdc_lineshape
        )

    def to_scenario(self) -> Scenario:
        det = self.detector()
        return Scenario(
            pump_repetition_rate_hz=self.pump_repetition_rate_hz,
            pump_duration_ps=self.pump_duration_ps,
            gate_rate_hz=self.gate_rate_hz,
            external_source=SpdcSource(
                spectrum=self.spdc_mode(),
                pairs_per_mw=self.external_pairs_per_mw,
                pump_power_mw=self.external_pump_power_mw,
            ),
            chip_source=SpdcSource(
                spectrum=self.spdc_mode(),
                pairs_per_mw=self.chip_pairs_per_mw,
                pump_power_mw=self.chip_pump_power_mw,
            ),
            photon_mode=SpectralMode(
                self.photon_center_wavelength_nm, self.photon_fwhm_pm, self.photon_lineshape
            ),
            dip_fwhm_time_ps=self.dip_fwhm_time_ps,
            coupler_c1=self.coupler(self.coupler_c1_anchors),
            coupler_c2=self.coupler(self.coupler_c2_anchors),
            coupler_c1_voltage_v=self.coupler_c1_voltage_v,
            coupler_c2_voltage_v=self.coupler_c2_voltage_v,
            layout=self.chip_layout(),
            alice_arm_loss_db=self.alice_arm_loss_db,
            monitor_arm_loss_db=self.monitor_arm_loss_db,
            filter_ab=FilterModel(
                self.filter_ab_center_nm, self.filter_ab_fwhm_pm, self.filter_ab_insertion_loss_db
            ),
            filter_c=FilterModel(
                self.filter_c_center_nm, self.filter_c_fwhm_pm, self.filter_c_insertion_loss_db
            ),
            detector_a=det,
            detector_b=det,
            detector_c=det,
            detector_monitor=det,
            monitor_enabled=self.monitor_enabled,
            delay_mm=self.delay_mm,
            pair_number_cutoff=self.pair_number_cutoff,
        )

    def to_link_params(self) -> LinkParams:
        return LinkParams(
            fiber_loss_db_per_km=self.fiber_loss_db_per_km,
            detector=DetectorModel(
                efficiency=self.link_detector_efficiency,
                dark_prob_per_ns=self.link_dark_prob_per_ns,
                gate_window_ns=self.link_gate_window_ns,
            ),
            pulse_rate_hz=self.link_pulse_rate_hz,
            mean_photon_per_pulse=self.mean_photon_per_pulse,
            relay_pair_mean=self.relay_pair_mean,
            teleport_fidelity=self.teleport_fidelity,
            chip_insertion_loss_db=self.chip_insertion_loss_db,
        )

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


_PAIR_LIST_KEYS = {"coupler_c1_anchors", "coupler_c2_anchors"}
_FLOAT_LIST_KEYS = {"map_na_values", "map_nb_values"}
_OPTIONAL_FLOAT_KEYS = {
    "dip_fwhm_time_ps",
    "measured_insertion_loss_db",
    "relay_position",
    "map_herald_efficiency",
}
_INT_KEYS = {"schema_version", "pair_number_cutoff", "dip_scan_points", "spectrum_points", "coupler_curve_points"}
_STR_KEYS = {"spdc_lineshape", "photon_lineshape"}
_BOOL_KEYS = {"monitor_enabled"}


def _coerce(key: str, value):
    if key in _PAIR_LIST_KEYS:
        try:
            return tuple((float(v), float(r)) for v, r in value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{key} must be a list of [voltage, ratio] pairs") from exc
    if key in _FLOAT_LIST_KEYS:
        try:
            return tuple(float(x) for x in value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{key} must be a list of numbers") from exc
    if key in _OPTIONAL_FLOAT_KEYS:
        return None if value is None else float(value)
    if key in _INT_KEYS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        return value
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key} must be a boolean, got {value!r}")
        return value
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigurationError(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key} must be a number, got {value!r}")
    return float(value)


def parse_config(document: dict) -> ScenarioConfig:
    """Validate a raw dict against the schema and build a ScenarioConfig."""
    if not isinstance(document, dict):
        raise ConfigurationError("configuration must be a JSON object")
    known = {f.name for f in fields(ScenarioConfig)}
    values = {}
    for key, value in document.items():
        if key.startswith("_"):
            continue
        if key not in known:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        values[key] = _coerce(key, value)
    version = values.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported schema_version {version}; this build reads version {SCHEMA_VERSION}"
        )
    return ScenarioConfig(**values)


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(document)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESET_NAMES:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    ref = resources.files("relaysim.presets").joinpath(f"{name}.json")
    document = json.loads(ref.read_text(encoding="utf-8"))
    return parse_config(document)


def load_anchor_csv(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Read coupler calibration anchors from CSV (columns: voltage_V, cross_ratio)."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise ConfigurationError(f"empty anchor file {path}")
    header = [c.strip() for c in lines[0].split(",")]
    if header != ["voltage_V", "cross_ratio"]:
        raise ConfigurationError(
            f"anchor CSV must have header 'voltage_V,cross_ratio', got {lines[0]!r}"
        )
    anchors = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigurationError(f"{path}:{i}: expected two columns, got {line!r}")
        try:
            anchors.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{i}: non-numeric anchor {line!r}") from exc
    return tuple(anchors)
