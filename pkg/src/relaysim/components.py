"""Parametric models of the physical elements of the relay circuit.

Covers the on-chip SPDC pair source, the two electro-optically tunable
directional couplers, rectangular bandpass filters, lumped loss segments with
the chip's port-to-port layout, and gated single-photon detectors.  Models
are immutable after construction/calibration; evaluation functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .units import SpectralMode, db_to_linear

# Half-max point of sinc^2(x): sinc(x) = sin(x)/x.
_SINC2_HALF_MAX_X = 1.391557377204354


class CalibrationError(ValueError):
    """Raised when coupler calibration anchors cannot be represented."""


class ConfigurationError(ValueError):
    """Raised for inconsistent component or layout configuration."""


# ---------------------------------------------------------------------------
# SPDC source
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpdcSource:
    """Pulsed pair source with brightness linear in pump power.

    pairs_per_mw is the calibration constant tying mean created pairs per
    pulse (in the collected, filtered mode) to average pump power.
    """

    spectrum: SpectralMode = SpectralMode(1532.0, 80_000.0, "sinc_squared")
    pairs_per_mw: float = 0.05 / 1.5
    pump_power_mw: float = 1.5

    def __post_init__(self) -> None:
        if self.pairs_per_mw < 0:
            raise ValueError(f"pairs_per_mw must be >= 0, got {self.pairs_per_mw}")
        if self.pump_power_mw < 0:
            raise ValueError(f"pump power must be >= 0, got {self.pump_power_mw}")

    @property
    def mean_pairs(self) -> float:
        return self.pairs_per_mw * self.pump_power_mw


def spdc_spectral_density(source: SpdcSource, wavelength_nm) -> np.ndarray | float:
    """Relative spectral density of the emitted pairs, normalized to 1 at center.

    Evaluates the source's envelope (sinc^2 or gaussian with the configured
    FWHM) at the given wavelength(s); the distribution is symmetric about the
    center wavelength.
    """
    lam = np.asarray(wavelength_nm, dtype=float)
    center = source.spectrum.center_wavelength_nm
    fwhm_nm = source.spectrum.fwhm_pm * 1e-3
    x = (lam - center) / fwhm_nm
    if source.spectrum.lineshape == "gaussian":
        out = np.exp(-4.0 * math.log(2.0) * x**2)
    else:
        arg = 2.0 * _SINC2_HALF_MAX_X * x
        out = np.sinc(arg / math.pi) ** 2
    return float(out) if np.isscalar(wavelength_nm) else out


# ---------------------------------------------------------------------------
# Electro-optic directional coupler
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplerModel:
    """Two-waveguide coupled-mode model with voltage-linear detuning.

    kappa_lc_rad is the coupling strength times interaction length; at the
    design value pi/2 the 9 mm section transfers all power at zero bias.
    gamma_rad_per_v aggregates the electro-optic detuning: delta*Lc = gamma*V.
    """

    kappa_lc_rad: float = math.pi / 2.0
    gamma_rad_per_v: float = 0.0
    interaction_length_mm: float = 9.0
    gamma_constrained: bool = True

    def __post_init__(self) -> None:
        if self.kappa_lc_rad <= 0:
            raise ValueError(f"kappa*Lc must be > 0, got {self.kappa_lc_rad}")


def coupler_ratio(model: CouplerModel, voltage_v: float) -> float:
    """Cross-port power fraction T(V) = kappa^2/(kappa^2+delta^2) * sin^2(Lc*sqrt(...)).

    Total function of voltage, always in [0, 1]; bar fraction is 1 - T.
    """
    a = model.kappa_lc_rad
    b = model.gamma_rad_per_v * voltage_v
    s = math.hypot(a, b)
    return (a / s) ** 2 * math.sin(s) ** 2


@dataclass(frozen=True)
class CouplerCalibration:
    """Result of fitting a CouplerModel to measured (voltage, ratio) anchors."""

    model: CouplerModel
    residual_rms: float
    residual_max: float
    anchors: tuple[tuple[float, float], ...]

    @property
    def gamma_constrained(self) -> bool:
        return self.model.gamma_constrained


def calibrate_coupler(
    anchor_points,
    kappa_lc_rad: float = math.pi / 2.0,
    fit_kappa: bool = False,
    interaction_length_mm: float = 9.0,
) -> CouplerCalibration:
    """Least-squares fit of the detuning slope gamma (optionally kappa*Lc) to anchors.

    Anchors are (voltage_V, cross_ratio) pairs; the default pair
    {(0, 1.0), (30, 0.5)} pins full transfer at zero bias and the 50/50 point.
    Anchors requesting more transfer than the zero-bias maximum are rejected.
    A single zero-voltage anchor leaves gamma unconstrained (flagged).
    """
    anchors = tuple((float(v), float(r)) for v, r in anchor_points)
    if not anchors:
        raise CalibrationError("at least one (voltage, ratio) anchor is required")
    for v, r in anchors:
        if not 0.0 <= r <= 1.0:
            raise CalibrationError(f"anchor ratio {r} at {v} V is outside [0, 1]")

    if fit_kappa:
        zero_anchors = [r for v, r in anchors if v == 0.0]
        if zero_anchors:
            r0 = zero_anchors[0]
            kappa_lc_rad = math.asin(math.sqrt(r0))

    t0 = math.sin(kappa_lc_rad) ** 2
    for v, r in anchors:
        if r > t0 + 1e-9:
            raise CalibrationError(
                f"anchor ratio {r} at {v} V exceeds the zero-bias maximum {t0:.6f}"
            )

    nonzero = [(v, r) for v, r in anchors if v != 0.0]
    if not nonzero:
        model = CouplerModel(kappa_lc_rad, 0.0, interaction_length_mm, gamma_constrained=False)
        res = [coupler_ratio(model, v) - r for v, r in anchors]
        rms = math.sqrt(sum(x * x for x in res) / len(res))
        return CouplerCalibration(model, rms, max(abs(x) for x in res), anchors)

    def residuals(params):
        gamma = params[0]
        m = CouplerModel(kappa_lc_rad, gamma, interaction_length_mm)
        return [coupler_ratio(m, v) - r for v, r in nonzero]

    # Initial slope: detuning comparable to coupling at the largest anchor voltage.
    v_ref = max(abs(v) for v, _ in nonzero)
    fit = least_squares(
        residuals, x0=[0.8 * kappa_lc_rad / v_ref], bounds=([0.0], [np.inf]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    model = CouplerModel(kappa_lc_rad, float(fit.x[0]), interaction_length_mm)
    res = [coupler_ratio(model, v) - r for v, r in anchors]
    rms = math.sqrt(sum(x * x for x in res) / len(res))
    return CouplerCalibration(model, rms, max(abs(x) for x in res), anchors)


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterModel:
    """Ideal rectangular bandpass plus a flat insertion loss.

    The passband is center +/- fwhm/2; photons in band survive with the
    insertion-loss transmission, photons out of band are absorbed.
    """

    center_nm: float
    fwhm_pm: float
    insertion_loss_db: float = 0.0

    def __post_init__(self) -> None:
        if self.fwhm_pm <= 0:
            raise ValueError(f"filter FWHM must be > 0, got {self.fwhm_pm}")
        if self.insertion_loss_db < 0:
            raise ValueError(f"insertion loss must be >= 0 dB, got {self.insertion_loss_db}")

    def passes(self, wavelength_nm: float) -> bool:
        half = self.fwhm_pm * 1e-3 / 2.0
        return abs(wavelength_nm - self.center_nm) <= half

    def transmission(self, wavelength_nm: float) -> float:
        """Survival probability for a photon at the given wavelength."""
        return db_to_linear(self.insertion_loss_db) if self.passes(wavelength_nm) else 0.0

    def band_overlap(self, source: SpdcSource, n_points: int = 8001) -> float:
        """Fraction of the source envelope falling inside the passband.

        Integrated over +/- 8 source FWHM; for sinc^2 envelopes the slowly
        decaying tails make this a few-percent-level approximation.
        """
        half = self.fwhm_pm * 1e-3 / 2.0
        span = source.spectrum.fwhm_pm * 1e-3 * 8.0
        lam = np.linspace(
            source.spectrum.center_wavelength_nm - span,
            source.spectrum.center_wavelength_nm + span,
            n_points,
        )
        dens = spdc_spectral_density(source, lam)
        inside = np.abs(lam - self.center_nm) <= half
        total = np.trapezoid(dens, lam)
        return float(np.trapezoid(np.where(inside, dens, 0.0), lam) / total)


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorModel:
    """Gated avalanche photodiode: efficiency, dark counts, gate timing."""

    efficiency: float = 0.10
    dark_prob_per_ns: float = 1e-5
    gate_window_ns: float = 1.0
    gate_rate_hz: float = 600e3

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not 0.0 <= self.dark_prob_per_ns <= 1.0:
            raise ValueError(f"dark probability must be in [0, 1], got {self.dark_prob_per_ns}")
        if self.gate_window_ns <= 0:
            raise ValueError(f"gate window must be > 0 ns, got {self.gate_window_ns}")

    @property
    def dark_prob_per_gate(self) -> float:
        return 1.0 - (1.0 - self.dark_prob_per_ns) ** self.gate_window_ns


def detector_click_prob(model: DetectorModel, incident_photons: int) -> float:
    """Per-gate click probability for n incident photons: 1-(1-eta)^n (1-dark)."""
    if incident_photons < 0:
        raise ValueError(f"photon count must be >= 0, got {incident_photons}")
    return 1.0 - (1.0 - model.efficiency) ** incident_photons * (
        1.0 - model.dark_prob_per_gate
    )


# ---------------------------------------------------------------------------
# Chip layout and loss composition
# ---------------------------------------------------------------------------

# Default per-segment losses in dB.  The through path (input fiber -> front
# propagation -> back propagation -> output fiber) sums to 8.5 dB; the
# measured port-to-port figure for the real device is ~9 dB.
DEFAULT_SEGMENTS = {
    "fiber_to_chip": 3.0,
    "chip_to_fiber": 3.0,
    "prop_front": 1.25,
    "prop_back": 1.25,
}

DEFAULT_PATHS = {
    # External photon: input port 1 up to the interference coupler C2.
    "alice_to_c2": ("fiber_to_chip", "prop_front"),
    # Either C2 output down to its output fiber port (A or B).
    "c2_to_out": ("prop_back", "chip_to_fiber"),
    # On-chip pair, partner routed up at C1 toward C2.
    "chipsrc_to_c2": ("prop_front",),
    # On-chip pair, partner routed down at C1 to output port C.
    "chipsrc_to_c": ("prop_front", "prop_back", "chip_to_fiber"),
    # Full port 1 -> port A insertion path.
    "insertion": ("fiber_to_chip", "prop_front", "prop_back", "chip_to_fiber"),
}


@dataclass(frozen=True)
class ChipLayout:
    """Acyclic port-to-port layout as named loss segments composed into paths.

    Each path is an ordered segment tuple terminating at one output; path
    losses are additive in dB and order-independent.  measured_insertion_db,
    when set, rescales all segments so the insertion path matches the
    measured figure verbatim.
    """

    segments: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SEGMENTS))
    paths: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_PATHS))
    measured_insertion_db: float | None = None

    def __post_init__(self) -> None:
        for name, loss in self.segments.items():
            if loss is None:
                raise ConfigurationError(f"segment {name!r} has no loss value")
            if loss < 0:
                raise ConfigurationError(f"segment {name!r} loss must be >= 0 dB, got {loss}")
        for path, names in self.paths.items():
            for name in names:
                if name not in self.segments:
                    raise ConfigurationError(
                        f"path {path!r} references missing segment {name!r}"
                    )
        if "insertion" not in self.paths:
            raise ConfigurationError("layout must define an 'insertion' path")

    def _scale(self) -> float:
        if self.measured_insertion_db is None:
            return 1.0
        nominal = sum(self.segments[s] for s in self.paths["insertion"])
        if nominal <= 0:
            raise ConfigurationError("cannot rescale a zero-loss insertion path")
        return self.measured_insertion_db / nominal

    def path_loss_db(self, path: str) -> float:
        if path not in self.paths:
            raise ConfigurationError(f"unknown path {path!r}")
        return self._scale() * sum(self.segments[s] for s in self.paths[path])

    def path_transmission(self, path: str) -> float:
        return db_to_linear(self.path_loss_db(path))


def chip_insertion_loss(layout: ChipLayout) -> float:
    """Total port-to-port insertion loss in dB (default layout: 8.5 dB)."""
    if layout.measured_insertion_db is not None:
        return layout.measured_insertion_db
    return layout.path_loss_db("insertion")
