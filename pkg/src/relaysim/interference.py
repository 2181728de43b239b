"""Closed-form two-photon interference (HOM) visibility analytics.

The dip visibility factorizes into a timing bound set by the arrival-time
uncertainty relative to the photons' coherence time, and a statistics bound
set by multi-pair emission of the two sources.  The dip itself is modeled as
a gaussian in path-length difference with FWHM c * tau_fwhm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .photostats import PhotonNumberDistribution, HeraldModel, herald_condition, thermal
from .units import SPEED_OF_LIGHT_M_PER_S

FOUR_LN2 = 4.0 * math.log(2.0)


class UndefinedVisibilityError(ValueError):
    """Raised when the out-of-dip coincidence probability is zero."""


class FitFailureError(RuntimeError):
    """Raised when a gaussian dip fit does not converge."""


@dataclass(frozen=True)
class VisibilityBreakdown:
    """Visibility split into its timing and statistics factors."""

    v_statistics: float
    v_timing: float

    @property
    def v_total(self) -> float:
        return self.v_statistics * self.v_timing


def v_timing(tau_uncert_ps: float, tau_c_ps: float) -> float:
    """Timing bound on visibility: 1 / sqrt((tau_uncert/tau_c)^2 + 1)."""
    if tau_c_ps <= 0:
        raise ValueError(f"coherence time must be > 0, got {tau_c_ps}")
    if tau_uncert_ps < 0:
        raise ValueError(f"time uncertainty must be >= 0, got {tau_uncert_ps}")
    return 1.0 / math.sqrt((tau_uncert_ps / tau_c_ps) ** 2 + 1.0)


def p_coincidence_bounds(
    dist_a: PhotonNumberDistribution, dist_b: PhotonNumberDistribution
) -> tuple[float, float]:
    """(p_min, p_max): coincidence probabilities inside and outside the dip.

    In the low-mean-number approximation only one- and two-photon terms
    matter: p_min = P0a*P2b + P2a*P0b (multi-pair background that cannot
    interfere) and p_max = P1a*P1b + p_min.
    """
    p_min = dist_a.p(0) * dist_b.p(2) + dist_a.p(2) * dist_b.p(0)
    p_max = dist_a.p(1) * dist_b.p(1) + p_min
    return p_min, p_max


def v_statistics(
    dist_a: PhotonNumberDistribution, dist_b: PhotonNumberDistribution
) -> float:
    """Statistics bound on visibility: (p_max - p_min) / p_max.

    Equal-mean thermal inputs give exactly 1/3 (the thermal identity
    P0*P2 = P1^2); ideal heralded inputs with no vacuum reach 1.
    """
    p_min, p_max = p_coincidence_bounds(dist_a, dist_b)
    if p_max <= 0.0:
        raise UndefinedVisibilityError(
            "out-of-dip coincidence probability is zero; visibility undefined"
        )
    return (p_max - p_min) / p_max


def visibility_map(
    grid_na, grid_nb, herald: HeraldModel | None = None
) -> list[tuple[float, float, float]]:
    """v_statistics over a (N_a, N_b) grid of thermal sources.

    Arm a is an unheralded thermal source; arm b is thermal, conditioned on
    a herald click when a HeraldModel is given.  Rows are emitted in grid
    order as (N_a, N_b, visibility).
    """
    grid_na = list(grid_na)
    grid_nb = list(grid_nb)
    if not grid_na or not grid_nb:
        raise ValueError("grids must be nonempty")
    rows = []
    for na in grid_na:
        dist_a = thermal(na)
        for nb in grid_nb:
            dist_b = thermal(nb)
            if herald is not None:
                dist_b = herald_condition(dist_b, herald)
            rows.append((na, nb, v_statistics(dist_a, dist_b)))
    return rows


@dataclass(frozen=True)
class DipProfile:
    """Sampled coincidence-rate dip versus path-length difference."""

    positions_mm: tuple[float, ...]
    rates: tuple[float, ...]
    visibility: float
    fwhm_mm: float
    baseline: float
    center_mm: float = 0.0

    def rate_at(self, position_mm: float) -> float:
        x = (position_mm - self.center_mm) / self.fwhm_mm
        return self.baseline * (1.0 - self.visibility * math.exp(-FOUR_LN2 * x * x))


def dip_profile(
    v_total: float, tau_fwhm_ps: float, baseline: float, positions_mm
) -> DipProfile:
    """Analytic gaussian dip: rate = baseline * (1 - V exp(-4 ln2 (dx/(c tau))^2)).

    The dip FWHM in path units is c * tau_fwhm (20 ps -> 6.0 mm).
    """
    if not 0.0 <= v_total <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {v_total}")
    if tau_fwhm_ps <= 0:
        raise ValueError(f"dip FWHM time must be > 0, got {tau_fwhm_ps}")
    fwhm_mm = tau_fwhm_ps * 1e-12 * SPEED_OF_LIGHT_M_PER_S * 1e3
    pos = tuple(float(x) for x in positions_mm)
    rates = tuple(
        baseline * (1.0 - v_total * math.exp(-FOUR_LN2 * (x / fwhm_mm) ** 2)) for x in pos
    )
    return DipProfile(pos, rates, v_total, fwhm_mm, baseline)


@dataclass(frozen=True)
class DipFit:
    """Gaussian dip fit result with 1-sigma parameter errors."""

    visibility: float
    visibility_err: float
    fwhm_mm: float
    fwhm_err: float
    baseline: float
    center_mm: float


def _dip_model(x, baseline, visibility, fwhm, center):
    return baseline * (1.0 - visibility * np.exp(-FOUR_LN2 * ((x - center) / fwhm) ** 2))


def fit_dip(positions_mm, rates, errors=None, fwhm_guess_mm: float | None = None) -> DipFit:
    """Fit baseline, visibility, FWHM, and center of a gaussian dip to samples.

    errors, when given, are absolute 1-sigma rate uncertainties.  Raises
    FitFailureError on non-convergence; callers that must preserve raw
    samples catch it and report the failure alongside the data.
    """
    x = np.asarray(positions_mm, dtype=float)
    y = np.asarray(rates, dtype=float)
    if x.size < 4:
        raise FitFailureError("need at least 4 samples to fit a 4-parameter dip")
    baseline0 = float(np.max(y))
    depth0 = 1.0 - float(np.min(y)) / baseline0 if baseline0 > 0 else 0.5
    depth0 = min(max(depth0, 1e-3), 1.0)
    fwhm0 = fwhm_guess_mm if fwhm_guess_mm else max((x.max() - x.min()) / 4.0, 1e-6)
    center0 = float(x[np.argmin(y)])
    sigma = None
    if errors is not None:
        sigma = np.asarray(errors, dtype=float)
        sigma = np.where(sigma > 0, sigma, np.max(sigma[sigma > 0]) if np.any(sigma > 0) else 1.0)
    try:
        with warnings.catch_warnings():
            # Exact-model samples fit perfectly; the covariance is then singular.
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(
                _dip_model, x, y,
                p0=[baseline0, depth0, fwhm0, center0],
                sigma=sigma, absolute_sigma=sigma is not None, maxfev=20000,
            )
    except (RuntimeError, ValueError) as exc:
        raise FitFailureError(f"gaussian dip fit did not converge: {exc}") from exc
    perr = np.sqrt(np.abs(np.diag(pcov)))
    return DipFit(
        visibility=float(popt[1]), visibility_err=float(perr[1]),
        fwhm_mm=abs(float(popt[2])), fwhm_err=float(perr[2]),
        baseline=float(popt[0]), center_mm=float(popt[3]),
    )
