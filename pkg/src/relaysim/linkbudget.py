"""Analytic key-rate-versus-distance models for one-way quantum links.

Three link variants are compared: a direct link, a textbook teleportation
relay with ideal Bell-state detection, and the folded relay implemented by
the chip, where the herald travels forward along the channel and gates the
receiver.  Rates are normalized to the direct link's zero-distance value;
absolute rates follow by multiplying with the pulse rate.

The relay rate model (per gated pulse, probabilities small):

  herald_true  = 1/2 * (mu t1 g_a eta_r) * (nu g_b eta_r)
  herald_false = (mu t1 g_a eta_r) d_r + (nu g_b eta_r) d_r + d_r^2
  signal       = herald_true * g_c t2 eta
  accidental   = herald_true * d  +  false heralds * (surviving partner + dark)

with t1, t2 the fiber transmissions of the two legs, g_a/g_b/g_c the chip
transmissions seen by the incoming, measured, and teleported photons, eta/d
the gated detector efficiency and per-gate dark probability (eta_r/d_r at
the relay), mu the channel mean photon number and nu the local pair mean.
The intrinsic factor 1/2 reflects linear-optics Bell-state discrimination.
Teleportation fidelity F enters the QBER as an intrinsic error (1 - F)/2
(depolarizing convention), which at F = 0.8 keeps relay QBER near 10%: the
SNR-unity criterion, not a QBER threshold, therefore sets the reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .components import ChipLayout, DetectorModel

_DEFAULT_LAYOUT = ChipLayout()
# Fraction of the full port-to-port insertion loss seen by photons born on
# chip (no input fiber coupling): 5.5 dB of 8.5 dB for the default layout.
_ONCHIP_LOSS_FRACTION = (
    _DEFAULT_LAYOUT.path_loss_db("chipsrc_to_c") / _DEFAULT_LAYOUT.path_loss_db("insertion")
)

MAX_SEARCH_KM = 1e4

VARIANTS = ("direct", "standard_relay", "folded_relay")


@dataclass(frozen=True)
class LinkParams:
    """Shared link-budget parameters for all variants."""

    fiber_loss_db_per_km: float = 0.2
    detector: DetectorModel = field(
        default_factory=lambda: DetectorModel(
            efficiency=0.10, dark_prob_per_ns=1e-6, gate_window_ns=1.0
        )
    )
    pulse_rate_hz: float = 76e6
    mean_photon_per_pulse: float = 1.0
    relay_pair_mean: float = 1.0
    teleport_fidelity: float = 0.8
    chip_insertion_loss_db: float = 0.0

    def __post_init__(self) -> None:
        if self.fiber_loss_db_per_km < 0:
            raise ValueError(f"fiber loss must be >= 0, got {self.fiber_loss_db_per_km}")
        if not 0.5 <= self.teleport_fidelity <= 1.0:
            raise ValueError(
                f"teleport fidelity must be in [0.5, 1], got {self.teleport_fidelity}"
            )
        if self.mean_photon_per_pulse < 0 or self.relay_pair_mean < 0:
            raise ValueError("mean photon numbers must be >= 0")
        if self.chip_insertion_loss_db < 0:
            raise ValueError("chip insertion loss must be >= 0 dB")


@dataclass(frozen=True)
class LinkModel:
    """One link variant; relay_position None means optimize per distance."""

    variant: str = "direct"
    relay_position: float | None = None
    chip_loss_override_db: float | None = None
    label: str | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.relay_position is not None and not 0.0 < self.relay_position < 1.0:
            raise ValueError(f"relay position must be in (0, 1), got {self.relay_position}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.variant == "folded_relay" and self.chip_loss_override_db == 0.0:
            return "folded_relay_lossless"
        return self.variant


@dataclass(frozen=True)
class LinkRates:
    """Per-gated-pulse link probabilities at one distance."""

    signal_prob: float
    accidental_prob: float
    qber: float
    normalized_rate: float
    relay_position: float | None


def _chip_losses_db(model: LinkModel, params: LinkParams) -> tuple[float, float, float]:
    """(loss_a, loss_b, loss_c) in dB for the three photon paths."""
    if model.variant == "direct":
        return 0.0, 0.0, 0.0
    if model.variant == "standard_relay":
        total = 0.0
    else:
        total = (
            model.chip_loss_override_db
            if model.chip_loss_override_db is not None
            else params.chip_insertion_loss_db
        )
    return total, total * _ONCHIP_LOSS_FRACTION, total * _ONCHIP_LOSS_FRACTION


def _relay_probs(
    model: LinkModel, params: LinkParams, distance_km: float, position: float
) -> tuple[float, float]:
    """(signal, accidental) per pulse for a relay at the given position."""
    alpha = params.fiber_loss_db_per_km
    eta = params.detector.efficiency
    d = params.detector.dark_prob_per_gate
    eta_r = 1.0 if model.variant == "standard_relay" else eta
    d_r = d
    mu = params.mean_photon_per_pulse
    nu = params.relay_pair_mean
    loss_a, loss_b, loss_c = _chip_losses_db(model, params)
    g_a, g_b, g_c = (10.0 ** (-x / 10.0) for x in (loss_a, loss_b, loss_c))

    t1 = 10.0 ** (-alpha * position * distance_km / 10.0)
    t2 = 10.0 ** (-alpha * (1.0 - position) * distance_km / 10.0)

    p_a = mu * t1 * g_a * eta_r
    p_b = nu * g_b * eta_r
    herald_true = 0.5 * p_a * p_b
    p_bob = g_c * t2 * eta

    signal = herald_true * p_bob
    accidental = (
        herald_true * d
        + (p_a * d_r) * (nu * p_bob + d)
        + (p_b * d_r) * (p_bob + d)
        + d_r * d_r * (nu * p_bob + d)
    )
    return signal, accidental


def _best_position(model: LinkModel, params: LinkParams, distance_km: float) -> float:
    """Golden-section maximization of SNR over the relay position."""
    if distance_km <= 0:
        return 0.5

    def snr(f: float) -> float:
        s, a = _relay_probs(model, params, distance_km, f)
        return s / a if a > 0 else math.inf

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 1e-4, 1.0 - 1e-4
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = snr(x1), snr(x2)
    for _ in range(80):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = snr(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = snr(x1)
    return (lo + hi) / 2.0


def link_rates(model: LinkModel, params: LinkParams, distance_km: float) -> LinkRates:
    """Signal/accidental probabilities, QBER, and normalized rate at a distance."""
    if distance_km < 0:
        raise ValueError(f"distance must be >= 0, got {distance_km}")
    eta = params.detector.efficiency
    d = params.detector.dark_prob_per_gate
    norm = params.mean_photon_per_pulse * eta + d

    if model.variant == "direct":
        signal = params.mean_photon_per_pulse * eta * 10.0 ** (
            -params.fiber_loss_db_per_km * distance_km / 10.0
        )
        accidental = d
        e_intrinsic = 0.0
        position = None
    else:
        position = (
            model.relay_position
            if model.relay_position is not None
            else _best_position(model, params, distance_km)
        )
        signal, accidental = _relay_probs(model, params, distance_km, position)
        e_intrinsic = (1.0 - params.teleport_fidelity) / 2.0

    total = signal + accidental
    qber = (0.5 * accidental + e_intrinsic * signal) / total if total > 0 else 0.5
    return LinkRates(signal, accidental, qber, total / norm, position)


@dataclass(frozen=True)
class MaxDistanceResult:
    """Maximum distance under a failure criterion, with relay placement info."""

    distance_km: float
    criterion: str
    relay_position: float | None
    midpoint_distance_km: float | None
    unbounded: bool


def _criterion_fails(
    model: LinkModel, params: LinkParams, distance_km: float, criterion: str, qber_threshold: float
) -> bool:
    rates = link_rates(model, params, distance_km)
    if criterion == "snr_unity":
        return rates.signal_prob < rates.accidental_prob
    if criterion == "qber_threshold":
        return rates.qber > qber_threshold
    raise ValueError(f"unknown criterion {criterion!r}")


def max_distance(
    model: LinkModel,
    params: LinkParams,
    criterion: str = "snr_unity",
    qber_threshold: float = 0.11,
) -> MaxDistanceResult:
    """Smallest distance where the criterion fails, bisected to 0.1 km.

    The relay position is optimized per distance unless the model fixes it;
    for relay variants the symmetric-midpoint result is also computed.  If
    the criterion never fails within 10^4 km the result is flagged unbounded.
    """

    def solve(m: LinkModel) -> float | None:
        if not _criterion_fails(m, params, MAX_SEARCH_KM, criterion, qber_threshold):
            return None
        if _criterion_fails(m, params, 0.0, criterion, qber_threshold):
            return 0.0
        lo, hi = 0.0, MAX_SEARCH_KM
        while hi - lo > 0.1:
            mid = (lo + hi) / 2.0
            if _criterion_fails(m, params, mid, criterion, qber_threshold):
                hi = mid
            else:
                lo = mid
        return (lo + hi) / 2.0

    dist = solve(model)
    if dist is None:
        return MaxDistanceResult(math.inf, criterion, model.relay_position, None, True)

    midpoint = None
    position = model.relay_position
    if model.variant != "direct":
        midpoint = solve(replace(model, relay_position=0.5))
        if position is None:
            position = _best_position(model, params, dist)
    return MaxDistanceResult(dist, criterion, position, midpoint, False)


@dataclass(frozen=True)
class SweepResult:
    """Normalized rates per model over a distance grid."""

    distances_km: tuple[float, ...]
    labels: tuple[str, ...]
    rates: tuple[tuple[float, ...], ...]  # one row of rates per label


def sweep(models, params: LinkParams, distances_km) -> SweepResult:
    """Evaluate normalized rates for each model over the distance grid."""
    models = list(models)
    distances = [float(x) for x in distances_km]
    if not models or not distances:
        raise ValueError("models and distances must be nonempty")
    labels = tuple(m.name for m in models)
    rates = tuple(
        tuple(link_rates(m, params, x).normalized_rate for x in distances) for m in models
    )
    return SweepResult(tuple(distances), labels, rates)


def fig2_models(params: LinkParams) -> list[LinkModel]:
    """The four standard comparison curves for the reference parameter set."""
    return [
        LinkModel("direct"),
        LinkModel("standard_relay"),
        LinkModel("folded_relay"),
        LinkModel("folded_relay", chip_loss_override_db=0.0, label="folded_relay_lossless"),
    ]
