"""Physical quantities and unit-safe spectral/temporal conversions.

All conversions between wavelength bandwidth, coherence time, and path delay
live here; no other module does raw unit math.  Lengths are carried in the
units conventional for each quantity (wavelengths in nm, filter bandwidths in
pm, delay-line positions in mm) and converted through the vacuum speed of
light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT_M_PER_S = 299_792_458.0

# Time-bandwidth products linking spectral FWHM to transform-limited
# coherence time for the two supported lineshapes.
TIME_BANDWIDTH_PRODUCT = {
    "gaussian": 0.441,
    "sinc_squared": 0.886,
}

LINESHAPES = tuple(TIME_BANDWIDTH_PRODUCT)


@dataclass(frozen=True)
class SpectralMode:
    """A light field's spectrum: center wavelength, FWHM bandwidth, lineshape.

    center_wavelength_nm and fwhm_pm must both be positive.  The derived
    coherence time decreases monotonically with bandwidth at fixed center.
    """

    center_wavelength_nm: float
    fwhm_pm: float
    lineshape: str = "gaussian"

    def __post_init__(self) -> None:
        if self.center_wavelength_nm <= 0:
            raise ValueError(f"center wavelength must be > 0, got {self.center_wavelength_nm}")
        if self.fwhm_pm <= 0:
            raise ValueError(f"FWHM bandwidth must be > 0, got {self.fwhm_pm}")
        if self.lineshape not in TIME_BANDWIDTH_PRODUCT:
            raise ValueError(f"unknown lineshape {self.lineshape!r}; expected one of {LINESHAPES}")

    @property
    def coherence_time_ps(self) -> float:
        return coherence_time(self)


@dataclass(frozen=True)
class PathDelay:
    """A free-space path difference and its equivalent vacuum delay.

    The two fields satisfy equivalent_delay_ps = path_difference_mm / c
    exactly; construct via from_path or from_delay to keep them consistent.
    """

    path_difference_mm: float
    equivalent_delay_ps: float

    @classmethod
    def from_path(cls, path_difference_mm: float) -> "PathDelay":
        return cls(path_difference_mm, path_to_delay(path_difference_mm))

    @classmethod
    def from_delay(cls, equivalent_delay_ps: float) -> "PathDelay":
        return cls(delay_to_path(equivalent_delay_ps), equivalent_delay_ps)


def coherence_time(mode: SpectralMode) -> float:
    """Transform-limited coherence time in ps: K * lambda^2 / (c * dlambda).

    K is the lineshape's time-bandwidth product (0.441 gaussian, 0.886 sinc^2).
    A 200 pm gaussian filter at 1530 nm gives 17.2 ps.
    """
    if mode.fwhm_pm <= 0:
        raise ValueError("coherence time undefined for non-positive bandwidth")
    k = TIME_BANDWIDTH_PRODUCT[mode.lineshape]
    lam_m = mode.center_wavelength_nm * 1e-9
    dlam_m = mode.fwhm_pm * 1e-12
    return k * lam_m**2 / (SPEED_OF_LIGHT_M_PER_S * dlam_m) * 1e12


def path_to_delay(path_difference_mm: float) -> float:
    """Vacuum delay in ps for a path difference in mm (6 mm -> 20.0 ps)."""
    if not math.isfinite(path_difference_mm):
        raise ValueError(f"path difference must be finite, got {path_difference_mm}")
    return path_difference_mm * 1e-3 / SPEED_OF_LIGHT_M_PER_S * 1e12


def delay_to_path(delay_ps: float) -> float:
    """Inverse of path_to_delay: path difference in mm for a vacuum delay in ps."""
    if not math.isfinite(delay_ps):
        raise ValueError(f"delay must be finite, got {delay_ps}")
    return delay_ps * 1e-12 * SPEED_OF_LIGHT_M_PER_S * 1e3


def db_to_linear(loss_db: float) -> float:
    """Power transmission for a loss in dB (3 dB -> 0.501)."""
    return 10.0 ** (-loss_db / 10.0)


def linear_to_db(transmission: float) -> float:
    """Loss in dB for a power transmission in (0, 1]."""
    if transmission <= 0:
        raise ValueError(f"transmission must be > 0, got {transmission}")
    return -10.0 * math.log10(transmission)
