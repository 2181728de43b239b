"""Pulse-by-pulse stochastic simulation of the relay interference apparatus.

One external heralded-style source feeds chip port 1; the on-chip source
feeds pairs through coupler C1; the surviving photons interfere at coupler
C2 and are counted on gated detectors D_a, D_b (outputs A, B) and D_c (the
herald at port C).  Reported tallies are singles, two-fold and three-fold
coincidences, at the scenario delay and at a far-delay reference, from which
raw and accidental-subtracted dip visibilities follow.

Randomness is per-pulse counter-based: pulse i, draw slot j reads a 64-bit
hash of (stream key, i * SLOTS + j), so any decomposition of the pulse range
over batches or workers reproduces identical tallies.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .components import (
    ChipLayout,
    ConfigurationError,
    CouplerModel,
    DetectorModel,
    FilterModel,
    SpdcSource,
    coupler_ratio,
)
from .interference import DipFit, FitFailureError, FOUR_LN2, VisibilityBreakdown, fit_dip, v_statistics, v_timing
from .photostats import (
    HeraldModel,
    PhotonNumberDistribution,
    apply_loss,
    herald_condition,
    thermal,
)
from .units import SPEED_OF_LIGHT_M_PER_S, SpectralMode, coherence_time, db_to_linear

# ---------------------------------------------------------------------------
# Counter-based RNG
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# Draw slots reserved per pulse; pulse i's draws live at counters
# [i*SLOTS, (i+1)*SLOTS).  Bounds the per-pulse photon loops at
# MAX_PAIR_CUTOFF pairs per source.
SLOTS = 512
MAX_PAIR_CUTOFF = 20

_S_GATE = 0
_S_NA = 1
_S_NB = 2
_S_A_SURV = 3                      # 20 slots
_S_B_SURV = 23                     # 20
_S_C_ARR = 43                      # 20
_S_C_DET = 63                      # 20
_S_COINC = 83
_S_SIDE = 84
_S_ROUTE_A = 85                    # 20
_S_ROUTE_B = 105                   # 20
_S_POST_A = 125                    # 40
_S_POST_B = 165                    # 40
_S_DET_A = 205                     # 40
_S_DET_B = 245                     # 40
_S_DARK_A = 285
_S_DARK_B = 286
_S_DARK_C = 287
_S_DARK_MON = 288
_S_MON_ARR = 289                   # 20
_S_MON_DET = 309                   # 20

_BATCH_PULSES = 1 << 21


def _mix_int(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_key(seed: int, *tags) -> int:
    """Deterministic 64-bit stream key from a seed and tag path."""
    h = _mix_int((seed & _MASK64) ^ 0x6A09E667F3BCC908)
    for tag in tags:
        data = tag.encode() if isinstance(tag, str) else str(int(tag)).encode()
        for byte in data:
            h = _mix_int((h + byte + _GOLDEN) & _MASK64)
    return h


def _mix64(x: np.ndarray) -> np.ndarray:
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX_A)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX_B)
    x ^= x >> np.uint64(31)
    return x


class CounterRng:
    """Stateless per-pulse uniform generator over (stream key, counter)."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = np.uint64(key & _MASK64)

    def uniform(self, pulse_idx: np.ndarray, slot: int) -> np.ndarray:
        c = pulse_idx * np.uint64(SLOTS) + np.uint64(slot)
        x = self.key + c * np.uint64(_GOLDEN)
        return (_mix64(x) >> np.uint64(11)) * 2.0**-53


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

def _default_filter_ab() -> FilterModel:
    return FilterModel(center_nm=1530.0, fwhm_pm=200.0)


def _default_filter_c() -> FilterModel:
    return FilterModel(center_nm=1534.0, fwhm_pm=800.0)


def _default_coupler() -> CouplerModel:
    # gamma set so the cross ratio is 0.5 at 30 V (see calibrate_coupler).
    return CouplerModel(gamma_rad_per_v=0.041819067411536176)


@dataclass(frozen=True)
class Scenario:
    """Full experiment description for one Monte Carlo run."""

    pump_repetition_rate_hz: float = 76e6
    pump_duration_ps: float = 2.5
    gate_rate_hz: float = 600e3

    external_source: SpdcSource = field(
        default_factory=lambda: SpdcSource(pairs_per_mw=0.05 / 1.5, pump_power_mw=1.5)
    )
    chip_source: SpdcSource = field(
        default_factory=lambda: SpdcSource(pairs_per_mw=0.02 / 7.0, pump_power_mw=7.0)
    )
    # Explicit pair-number distributions override the sources' thermal laws.
    external_distribution: PhotonNumberDistribution | None = None
    chip_distribution: PhotonNumberDistribution | None = None

    photon_mode: SpectralMode = SpectralMode(1530.0, 200.0, "gaussian")
    dip_fwhm_time_ps: float | None = None

    coupler_c1: CouplerModel = field(default_factory=_default_coupler)
    coupler_c2: CouplerModel = field(default_factory=_default_coupler)
    coupler_c1_voltage_v: float = 30.0
    coupler_c2_voltage_v: float = 30.0

    layout: ChipLayout = field(default_factory=ChipLayout)
    alice_arm_loss_db: float = 0.0
    monitor_arm_loss_db: float = 0.0
    filter_ab: FilterModel = field(default_factory=_default_filter_ab)
    filter_c: FilterModel = field(default_factory=_default_filter_c)

    detector_a: DetectorModel = field(default_factory=DetectorModel)
    detector_b: DetectorModel = field(default_factory=DetectorModel)
    detector_c: DetectorModel = field(default_factory=DetectorModel)
    detector_monitor: DetectorModel = field(default_factory=DetectorModel)
    monitor_enabled: bool = False

    delay_mm: float = 0.0
    pair_number_cutoff: int = 20

    @property
    def partner_wavelength_nm(self) -> float:
        """Energy-matched partner of the interfering photons (chip pair)."""
        inv = 2.0 / self.chip_source.spectrum.center_wavelength_nm - 1.0 / self.photon_mode.center_wavelength_nm
        return 1.0 / inv

    @property
    def tau_fwhm_ps(self) -> float:
        if self.dip_fwhm_time_ps is not None:
            return self.dip_fwhm_time_ps
        return coherence_time(self.photon_mode)


@dataclass(frozen=True)
class SimParams:
    """Scenario compiled to per-arm probabilities and routing fractions."""

    p_gate: float
    cdf_a: np.ndarray
    cdf_b: np.ndarray
    mean_a: float
    mean_b: float
    q_a: float            # external photon survives to C2 input a
    q_b: float            # chip photon b routed up and surviving to C2 input b
    p_c_arrive: float     # chip photon c routed down and surviving to D_c input
    s_post: float         # C2 output to detector input (either output)
    cross2: float         # C2 cross-port fraction
    eta_a: float
    eta_b: float
    eta_c: float
    dark_a: float
    dark_b: float
    dark_c: float
    overlap_peak: float   # temporal overlap at zero path difference
    fwhm_mm: float
    delay_mm: float
    cutoff: int
    monitor_enabled: bool
    p_mon_arrive: float
    eta_mon: float
    dark_mon: float

    def overlap_at(self, delay_mm: float) -> float:
        x = delay_mm / self.fwhm_mm
        return self.overlap_peak * math.exp(-FOUR_LN2 * x * x)


def _pair_distribution(
    override: PhotonNumberDistribution | None, source: SpdcSource, cutoff: int
) -> PhotonNumberDistribution:
    if override is not None:
        return override
    return thermal(source.mean_pairs, cutoff)


def compile_scenario(scenario: Scenario) -> SimParams:
    """Validate a scenario and reduce it to per-arm probabilities."""
    if scenario.gate_rate_hz > scenario.pump_repetition_rate_hz:
        raise ConfigurationError("gating rate cannot exceed the pump repetition rate")
    if scenario.gate_rate_hz <= 0 or scenario.pump_repetition_rate_hz <= 0:
        raise ConfigurationError("pump and gate rates must be positive")
    if not 1 <= scenario.pair_number_cutoff <= MAX_PAIR_CUTOFF:
        raise ConfigurationError(
            f"pair_number_cutoff must be in [1, {MAX_PAIR_CUTOFF}]"
        )
    if scenario.pump_duration_ps < 0:
        raise ConfigurationError("pump duration must be >= 0")
    if not math.isfinite(scenario.delay_mm):
        raise ConfigurationError("delay must be finite")
    if scenario.alice_arm_loss_db < 0 or scenario.monitor_arm_loss_db < 0:
        raise ConfigurationError("arm losses must be >= 0 dB")

    lam_signal = scenario.photon_mode.center_wavelength_nm
    lam_partner = scenario.partner_wavelength_nm
    if not scenario.filter_ab.passes(lam_signal):
        raise ConfigurationError("output A/B filter must pass the interfering photons")
    if not scenario.filter_c.passes(lam_partner):
        raise ConfigurationError("port C filter must pass the partner photons")
    if scenario.filter_ab.passes(lam_partner) or scenario.filter_c.passes(lam_signal):
        raise ConfigurationError(
            "signal and partner filter bands must be disjoint for clean heralding"
        )

    cutoff = scenario.pair_number_cutoff
    dist_a = _pair_distribution(scenario.external_distribution, scenario.external_source, cutoff)
    dist_b = _pair_distribution(scenario.chip_distribution, scenario.chip_source, cutoff)
    if dist_a.n_max > MAX_PAIR_CUTOFF or dist_b.n_max > MAX_PAIR_CUTOFF:
        raise ConfigurationError(f"pair distributions must be truncated at <= {MAX_PAIR_CUTOFF}")

    t1 = coupler_ratio(scenario.coupler_c1, scenario.coupler_c1_voltage_v)
    t2 = coupler_ratio(scenario.coupler_c2, scenario.coupler_c2_voltage_v)

    # Cross port of C1 continues toward C2; bar port exits at port C.
    q_a = db_to_linear(scenario.alice_arm_loss_db) * scenario.layout.path_transmission("alice_to_c2")
    q_b = t1 * scenario.layout.path_transmission("chipsrc_to_c2")
    p_c = (
        (1.0 - t1)
        * scenario.layout.path_transmission("chipsrc_to_c")
        * db_to_linear(scenario.filter_c.insertion_loss_db)
    )
    s_post = scenario.layout.path_transmission("c2_to_out") * db_to_linear(
        scenario.filter_ab.insertion_loss_db
    )

    tau_c_ps = coherence_time(scenario.photon_mode)
    peak = v_timing(scenario.pump_duration_ps, tau_c_ps)
    fwhm_mm = scenario.tau_fwhm_ps * 1e-12 * SPEED_OF_LIGHT_M_PER_S * 1e3

    return SimParams(
        p_gate=scenario.gate_rate_hz / scenario.pump_repetition_rate_hz,
        cdf_a=np.cumsum(np.asarray(dist_a.pmf, dtype=float)),
        cdf_b=np.cumsum(np.asarray(dist_b.pmf, dtype=float)),
        mean_a=dist_a.mean,
        mean_b=dist_b.mean,
        q_a=q_a,
        q_b=q_b,
        p_c_arrive=p_c,
        s_post=s_post,
        cross2=t2,
        eta_a=scenario.detector_a.efficiency,
        eta_b=scenario.detector_b.efficiency,
        eta_c=scenario.detector_c.efficiency,
        dark_a=scenario.detector_a.dark_prob_per_gate,
        dark_b=scenario.detector_b.dark_prob_per_gate,
        dark_c=scenario.detector_c.dark_prob_per_gate,
        overlap_peak=peak,
        fwhm_mm=fwhm_mm,
        delay_mm=scenario.delay_mm,
        cutoff=cutoff,
        monitor_enabled=scenario.monitor_enabled,
        p_mon_arrive=db_to_linear(scenario.monitor_arm_loss_db),
        eta_mon=scenario.detector_monitor.efficiency,
        dark_mon=scenario.detector_monitor.dark_prob_per_gate,
    )


# ---------------------------------------------------------------------------
# Tallies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tally:
    """Integer counters accumulated over gated pulses; merged by addition."""

    gated: int = 0
    singles_a: int = 0
    singles_b: int = 0
    singles_c: int = 0
    singles_monitor: int = 0
    twofold_ab: int = 0
    threefold_abc: int = 0
    generated: int = 0
    lost: int = 0
    undetected: int = 0
    detected: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(
            self.gated + other.gated,
            self.singles_a + other.singles_a,
            self.singles_b + other.singles_b,
            self.singles_c + other.singles_c,
            self.singles_monitor + other.singles_monitor,
            self.twofold_ab + other.twofold_ab,
            self.threefold_abc + other.threefold_abc,
            self.generated + other.generated,
            self.lost + other.lost,
            self.undetected + other.undetected,
            self.detected + other.detected,
        )


def _survivor_counts(rng, idx, n, base_slot, p):
    """Count per-pulse Bernoulli survivors among n generated photons."""
    k = np.zeros(idx.shape[0], dtype=np.int64)
    top = int(n.max()) if idx.shape[0] else 0
    for j in range(top):
        m = n > j
        if not m.any():
            break
        k[m] += rng.uniform(idx[m], base_slot + j) < p
    return k


def _arrive_detect_counts(rng, idx, n, arr_slot, det_slot, p_arrive, eta):
    """Per-photon arrival then detection draws; returns (arrived, detected)."""
    arrived = np.zeros(idx.shape[0], dtype=np.int64)
    detected = np.zeros(idx.shape[0], dtype=np.int64)
    top = int(n.max()) if idx.shape[0] else 0
    for j in range(top):
        m = n > j
        if not m.any():
            break
        sub = idx[m]
        arr = rng.uniform(sub, arr_slot + j) < p_arrive
        det = arr & (rng.uniform(sub, det_slot + j) < eta)
        arrived[m] += arr
        detected[m] += det
    return arrived, detected


def _simulate_batch(params: SimParams, rng: CounterRng, idx: np.ndarray, overlap: float) -> Tally:
    """Simulate one batch of gated pulses at a fixed temporal overlap."""
    n_g = idx.shape[0]
    if n_g == 0:
        return Tally()

    n_a = np.searchsorted(params.cdf_a, rng.uniform(idx, _S_NA), side="right")
    n_b = np.searchsorted(params.cdf_b, rng.uniform(idx, _S_NB), side="right")
    np.minimum(n_a, params.cutoff, out=n_a)
    np.minimum(n_b, params.cutoff, out=n_b)

    k_a = _survivor_counts(rng, idx, n_a, _S_A_SURV, params.q_a)
    k_b = _survivor_counts(rng, idx, n_b, _S_B_SURV, params.q_b)
    arr_c, det_c = _arrive_detect_counts(
        rng, idx, n_b, _S_C_ARR, _S_C_DET, params.p_c_arrive, params.eta_c
    )

    # Coupler C2: quantum interference for the 1+1 pattern, independent
    # routing for every other pattern.
    cross = params.cross2
    bar = 1.0 - cross
    p_coinc = bar * bar + cross * cross - 2.0 * bar * cross * overlap

    m_a_out = np.zeros(n_g, dtype=np.int64)
    m_b_out = np.zeros(n_g, dtype=np.int64)

    pat11 = (k_a == 1) & (k_b == 1)
    if pat11.any():
        sub = idx[pat11]
        coinc = rng.uniform(sub, _S_COINC) < p_coinc
        both_a = ~coinc & (rng.uniform(sub, _S_SIDE) < 0.5)
        both_b = ~coinc & ~both_a
        w = np.flatnonzero(pat11)
        m_a_out[w] += coinc + 2 * both_a
        m_b_out[w] += coinc + 2 * both_b

    other = ~pat11
    if other.any():
        for j in range(int(k_a.max()) if n_g else 0):
            m = other & (k_a > j)
            if not m.any():
                continue
            to_b = rng.uniform(idx[m], _S_ROUTE_A + j) < cross
            m_b_out[m] += to_b
            m_a_out[m] += ~to_b
        for j in range(int(k_b.max()) if n_g else 0):
            m = other & (k_b > j)
            if not m.any():
                continue
            to_a = rng.uniform(idx[m], _S_ROUTE_B + j) < cross
            m_a_out[m] += to_a
            m_b_out[m] += ~to_a

    arr_a, det_a = _arrive_detect_counts(
        rng, idx, m_a_out, _S_POST_A, _S_DET_A, params.s_post, params.eta_a
    )
    arr_b, det_b = _arrive_detect_counts(
        rng, idx, m_b_out, _S_POST_B, _S_DET_B, params.s_post, params.eta_b
    )

    def _with_dark(detected, slot, dark):
        clicks = detected > 0
        if dark > 0.0:
            quiet = ~clicks
            clicks[quiet] = rng.uniform(idx[quiet], slot) < dark
        return clicks

    click_a = _with_dark(det_a, _S_DARK_A, params.dark_a)
    click_b = _with_dark(det_b, _S_DARK_B, params.dark_b)
    click_c = _with_dark(det_c, _S_DARK_C, params.dark_c)

    generated = int(n_a.sum() + 2 * n_b.sum())
    lost = int(
        (n_a - k_a).sum()
        + (n_b - k_b).sum()
        + (n_b - arr_c).sum()
        + (m_a_out - arr_a).sum()
        + (m_b_out - arr_b).sum()
    )
    undetected = int((arr_a - det_a).sum() + (arr_b - det_b).sum() + (arr_c - det_c).sum())
    detected = int(det_a.sum() + det_b.sum() + det_c.sum())

    singles_mon = 0
    if params.monitor_enabled:
        arr_m, det_m = _arrive_detect_counts(
            rng, idx, n_a, _S_MON_ARR, _S_MON_DET, params.p_mon_arrive, params.eta_mon
        )
        click_m = _with_dark(det_m, _S_DARK_MON, params.dark_mon)
        singles_mon = int(click_m.sum())
        generated += int(n_a.sum())
        lost += int((n_a - arr_m).sum())
        undetected += int((arr_m - det_m).sum())
        detected += int(det_m.sum())

    ab = click_a & click_b
    return Tally(
        gated=n_g,
        singles_a=int(click_a.sum()),
        singles_b=int(click_b.sum()),
        singles_c=int(click_c.sum()),
        singles_monitor=singles_mon,
        twofold_ab=int(ab.sum()),
        threefold_abc=int((ab & click_c).sum()),
        generated=generated,
        lost=lost,
        undetected=undetected,
        detected=detected,
    )


def _simulate_range(params: SimParams, key: int, start: int, stop: int, overlap: float) -> Tally:
    rng = CounterRng(key)
    total = Tally()
    for lo in range(start, stop, _BATCH_PULSES):
        hi = min(lo + _BATCH_PULSES, stop)
        pulse_idx = np.arange(lo, hi, dtype=np.uint64)
        if params.p_gate < 1.0:
            gated = rng.uniform(pulse_idx, _S_GATE) < params.p_gate
            pulse_idx = pulse_idx[gated]
        total = total + _simulate_batch(params, rng, pulse_idx, overlap)
    return total


def _simulate_range_star(args) -> Tally:
    return _simulate_range(*args)


def _simulate(params: SimParams, n_pulses: int, key: int, overlap: float, workers: int) -> Tally:
    if workers <= 1:
        return _simulate_range(params, key, 0, n_pulses, overlap)
    # Fixed batch grid: the decomposition (hence every draw) is independent
    # of the worker count; merging integer tallies is order-independent.
    tasks = [
        (params, key, lo, min(lo + _BATCH_PULSES, n_pulses), overlap)
        for lo in range(0, n_pulses, _BATCH_PULSES)
    ]
    total = Tally()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for tally in pool.map(_simulate_range_star, tasks):
            total = total + tally
    return total


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountsReport:
    """Tallies at the scenario delay (dip leg) and at far delay (reference leg)."""

    pulses_simulated: int
    seed: int
    delay_mm: float
    dip: Tally
    ref: Tally
    dark_a: float
    dark_b: float
    dark_c: float

    @property
    def gated_pulses(self) -> int:
        return self.dip.gated

    def _vis(self, c0: int, g0: int, c1: int, g1: int) -> tuple[float, float]:
        if c0 <= 0 or c1 <= 0 or g0 <= 0 or g1 <= 0:
            return float("nan"), float("nan")
        r = (c0 / g0) / (c1 / g1)
        err = r * math.sqrt(1.0 / c0 + 1.0 / c1)
        return 1.0 - r, err

    @property
    def raw_visibility(self) -> float:
        return self._vis(self.dip.threefold_abc, self.dip.gated, self.ref.threefold_abc, self.ref.gated)[0]

    @property
    def raw_visibility_err(self) -> float:
        return self._vis(self.dip.threefold_abc, self.dip.gated, self.ref.threefold_abc, self.ref.gated)[1]

    @property
    def raw_twofold_visibility(self) -> float:
        return self._vis(self.dip.twofold_ab, self.dip.gated, self.ref.twofold_ab, self.ref.gated)[0]

    @property
    def raw_twofold_visibility_err(self) -> float:
        return self._vis(self.dip.twofold_ab, self.dip.gated, self.ref.twofold_ab, self.ref.gated)[1]


@dataclass(frozen=True)
class NetRates:
    """Accidental-subtracted coincidence rates and visibilities."""

    accidental_threefold_dip: float
    accidental_threefold_ref: float
    net_threefold_dip: float
    net_threefold_ref: float
    net_visibility: float
    net_visibility_err: float
    accidental_twofold_dip: float
    accidental_twofold_ref: float
    net_twofold_dip: float
    net_twofold_ref: float
    net_twofold_visibility: float


def _photon_click_prob(p_click: float, dark: float) -> float:
    if dark <= 0.0:
        return p_click
    if dark >= 1.0:
        return 0.0
    return max(0.0, 1.0 - (1.0 - p_click) / (1.0 - dark))


def _leg_accidentals(tally: Tally, dark_a: float, dark_b: float, dark_c: float):
    """Expected per-gate accidental coincidence probabilities for one leg.

    Assumes detector independence: any coincidence involving at least one
    dark click is accidental, with the photon-click probabilities inferred
    from the measured singles.
    """
    g = tally.gated
    if g == 0 or (dark_a == 0.0 and dark_b == 0.0 and dark_c == 0.0):
        return 0.0, 0.0
    pa, pb, pc = tally.singles_a / g, tally.singles_b / g, tally.singles_c / g
    fa, fb, fc = (
        _photon_click_prob(pa, dark_a),
        _photon_click_prob(pb, dark_b),
        _photon_click_prob(pc, dark_c),
    )
    acc3 = pa * pb * pc - fa * fb * fc
    acc2 = pa * pb - fa * fb
    return max(acc3, 0.0), max(acc2, 0.0)


def subtract_accidentals(report: CountsReport) -> NetRates:
    """Subtract dark-count-driven accidentals from both legs' coincidences."""
    acc3_dip, acc2_dip = _leg_accidentals(report.dip, report.dark_a, report.dark_b, report.dark_c)
    acc3_ref, acc2_ref = _leg_accidentals(report.ref, report.dark_a, report.dark_b, report.dark_c)

    g0, g1 = report.dip.gated, report.ref.gated
    net3_dip = max(report.dip.threefold_abc / g0 - acc3_dip, 0.0) if g0 else 0.0
    net3_ref = max(report.ref.threefold_abc / g1 - acc3_ref, 0.0) if g1 else 0.0
    net2_dip = max(report.dip.twofold_ab / g0 - acc2_dip, 0.0) if g0 else 0.0
    net2_ref = max(report.ref.twofold_ab / g1 - acc2_ref, 0.0) if g1 else 0.0

    if net3_dip > 0 and net3_ref > 0:
        vis = 1.0 - net3_dip / net3_ref
        s0 = math.sqrt(report.dip.threefold_abc) / g0
        s1 = math.sqrt(report.ref.threefold_abc) / g1
        err = math.sqrt((s0 / net3_ref) ** 2 + (net3_dip * s1 / net3_ref**2) ** 2)
    elif net3_ref > 0:
        vis, err = 1.0, float("nan")
    else:
        vis, err = float("nan"), float("nan")

    vis2 = 1.0 - net2_dip / net2_ref if net2_ref > 0 else float("nan")

    return NetRates(
        acc3_dip, acc3_ref, net3_dip, net3_ref, vis, err,
        acc2_dip, acc2_ref, net2_dip, net2_ref, vis2,
    )


def run(scenario: Scenario, n_pulses: int, seed: int = 1, workers: int = 1) -> CountsReport:
    """Simulate n_pulses laser pulses at the scenario delay and at far delay.

    Deterministic for fixed (scenario, n_pulses, seed) regardless of the
    worker count.  The far-delay reference leg (temporal overlap zero) uses
    an independent stream and provides the out-of-dip baseline from which
    the report's visibilities are derived.
    """
    if n_pulses <= 0:
        raise ValueError(f"n_pulses must be > 0, got {n_pulses}")
    params = compile_scenario(scenario)
    overlap = params.overlap_at(params.delay_mm)
    dip = _simulate(params, n_pulses, derive_key(seed, "dip"), overlap, workers)
    ref = _simulate(params, n_pulses, derive_key(seed, "ref"), 0.0, workers)
    return CountsReport(
        pulses_simulated=n_pulses,
        seed=seed,
        delay_mm=scenario.delay_mm,
        dip=dip,
        ref=ref,
        dark_a=params.dark_a,
        dark_b=params.dark_b,
        dark_c=params.dark_c,
    )


# ---------------------------------------------------------------------------
# Expected rates (exact truncated enumeration) and analytic prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpectedRates:
    """Exact per-gated-pulse event probabilities for the compiled model."""

    p_single_a: float
    p_single_b: float
    p_single_c: float
    p_twofold_ab: float
    p_threefold_abc: float


def _click(m: int, p_det: float, dark: float) -> float:
    return 1.0 - (1.0 - p_det) ** m * (1.0 - dark)


def expected_rates(scenario: Scenario, overlap: float | None = None) -> ExpectedRates:
    """Enumerate the pulse model exactly (truncated at the pair cutoff).

    This is the n -> infinity surrogate for the Monte Carlo engine: the same
    source statistics, routing rules, and detection model, summed over all
    photon patterns instead of sampled.
    """
    params = compile_scenario(scenario)
    if overlap is None:
        overlap = params.overlap_at(params.delay_mm)

    cutoff = params.cutoff
    pmf_a_pairs = np.diff(params.cdf_a, prepend=0.0)
    pmf_b_pairs = np.diff(params.cdf_b, prepend=0.0)

    # Photons from the external source at C2 input a: binomial thinning.
    dist_a = apply_loss(
        PhotonNumberDistribution(tuple(pmf_a_pairs / pmf_a_pairs.sum()), float(params.mean_a)),
        params.q_a,
    )
    pk_a = np.asarray(dist_a.pmf)

    # Joint law of (photons at C2 input b, herald click), correlated through
    # the chip pair number n.
    h_det = params.p_c_arrive * params.eta_c
    pk_b_herald = np.zeros(cutoff + 1)
    pk_b = np.zeros(cutoff + 1)
    for n in range(cutoff + 1):
        pn = pmf_b_pairs[n] / pmf_b_pairs.sum()
        if pn == 0.0:
            continue
        p_click_c = 1.0 - (1.0 - h_det) ** n * (1.0 - params.dark_c)
        for k in range(n + 1):
            b = math.comb(n, k) * params.q_b**k * (1.0 - params.q_b) ** (n - k)
            pk_b[k] += pn * b
            pk_b_herald[k] += pn * b * p_click_c
    p_single_c = float(pk_b_herald.sum())  # includes the dark contribution

    p_det_a = params.s_post * params.eta_a
    p_det_b = params.s_post * params.eta_b
    cross = params.cross2
    bar = 1.0 - cross
    p_coinc = bar * bar + cross * cross - 2.0 * bar * cross * overlap

    max_m = 2 * cutoff + 1
    click_a = np.array([_click(m, p_det_a, params.dark_a) for m in range(max_m)])
    click_b = np.array([_click(m, p_det_b, params.dark_b) for m in range(max_m)])

    def output_stats(ka: int, kb: int) -> tuple[float, float, float]:
        """(P[click A], P[click B], P[click A and B]) for a coupler pattern."""
        if ka == 1 and kb == 1:
            p_bunch = (1.0 - p_coinc) / 2.0
            pa = p_coinc * click_a[1] + p_bunch * (click_a[2] + click_a[0])
            pb = p_coinc * click_b[1] + p_bunch * (click_b[2] + click_b[0])
            pab = (
                p_coinc * click_a[1] * click_b[1]
                + p_bunch * (click_a[2] * click_b[0] + click_a[0] * click_b[2])
            )
            return pa, pb, pab
        pa = pb = pab = 0.0
        for x in range(ka + 1):          # a-photons crossing to output B
            px = math.comb(ka, x) * cross**x * bar ** (ka - x)
            for y in range(kb + 1):      # b-photons crossing to output A
                py = math.comb(kb, y) * cross**y * bar ** (kb - y)
                m_a = ka - x + y
                m_b = x + kb - y
                w = px * py
                pa += w * click_a[m_a]
                pb += w * click_b[m_b]
                pab += w * click_a[m_a] * click_b[m_b]
        return pa, pb, pab

    p_single_a = p_single_b = p_two = p_three = 0.0
    for ka in range(cutoff + 1):
        if pk_a[ka] == 0.0:
            continue
        for kb in range(cutoff + 1):
            if pk_b[kb] == 0.0 and pk_b_herald[kb] == 0.0:
                continue
            pa, pb, pab = output_stats(ka, kb)
            p_single_a += pk_a[ka] * pk_b[kb] * pa
            p_single_b += pk_a[ka] * pk_b[kb] * pb
            p_two += pk_a[ka] * pk_b[kb] * pab
            p_three += pk_a[ka] * pk_b_herald[kb] * pab

    return ExpectedRates(
        float(p_single_a), float(p_single_b), float(p_single_c), float(p_two), float(p_three)
    )


def analytic_visibility(scenario: Scenario) -> VisibilityBreakdown:
    """Timing-and-statistics visibility prediction for the three-fold dip.

    The statistics factor evaluates the coincidence bounds on the photon
    number distributions presented to coupler C2: the loss-thinned external
    distribution against the chip distribution conditioned on the herald
    click and thinned by the b-arm survival.
    """
    params = compile_scenario(scenario)
    cutoff = params.cutoff
    dist_a = _pair_distribution(scenario.external_distribution, scenario.external_source, cutoff)
    dist_b = _pair_distribution(scenario.chip_distribution, scenario.chip_source, cutoff)
    herald = HeraldModel(params.p_c_arrive * params.eta_c, params.dark_c)
    dist_a_c2 = apply_loss(dist_a, params.q_a)
    dist_b_c2 = apply_loss(herald_condition(dist_b, herald), params.q_b)
    v_stat = v_statistics(dist_a_c2, dist_b_c2)
    return VisibilityBreakdown(v_statistics=v_stat, v_timing=params.overlap_peak)


def analytic_twofold_visibility(scenario: Scenario) -> VisibilityBreakdown:
    """As analytic_visibility but without herald conditioning (two-fold regime)."""
    params = compile_scenario(scenario)
    cutoff = params.cutoff
    dist_a = _pair_distribution(scenario.external_distribution, scenario.external_source, cutoff)
    dist_b = _pair_distribution(scenario.chip_distribution, scenario.chip_source, cutoff)
    v_stat = v_statistics(apply_loss(dist_a, params.q_a), apply_loss(dist_b, params.q_b))
    return VisibilityBreakdown(v_statistics=v_stat, v_timing=params.overlap_peak)


# ---------------------------------------------------------------------------
# Dip scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DipScanResult:
    """Per-position three-fold rates with a gaussian fit of the dip."""

    positions_mm: tuple[float, ...]
    rates: tuple[float, ...]
    errors: tuple[float, ...]
    fit: DipFit | None
    fit_failed: str | None
    analytic: bool

    @property
    def converged(self) -> bool:
        return self.fit is not None


def scan_dip(
    scenario: Scenario,
    positions_mm,
    n_pulses_per_point: int,
    seed: int = 1,
    workers: int = 1,
) -> DipScanResult:
    """Scan the delay line and fit the resulting coincidence dip.

    With n_pulses_per_point = 0 the scan is analytic: expected rates are
    evaluated exactly at each position instead of sampling pulses.
    Requires at least 3 positions spanning more than twice the expected dip
    width.  Fit non-convergence is reported in the result, with the raw
    samples preserved.
    """
    positions = [float(x) for x in positions_mm]
    if len(positions) < 3:
        raise ValueError("need at least 3 scan positions")
    params = compile_scenario(scenario)
    span = max(positions) - min(positions)
    if span <= 2.0 * params.fwhm_mm:
        raise ValueError(
            f"scan span {span:.3f} mm must exceed twice the expected width "
            f"({2 * params.fwhm_mm:.3f} mm)"
        )

    rates: list[float] = []
    errors: list[float] = []
    for i, pos in enumerate(positions):
        pos_scenario = replace(scenario, delay_mm=pos)
        if n_pulses_per_point == 0:
            rates.append(expected_rates(pos_scenario).p_threefold_abc)
            errors.append(0.0)
        else:
            pos_params = compile_scenario(pos_scenario)
            tally = _simulate(
                pos_params,
                n_pulses_per_point,
                derive_key(seed, "scan", i),
                pos_params.overlap_at(pos),
                workers,
            )
            if tally.gated == 0:
                rates.append(0.0)
                errors.append(0.0)
            else:
                rates.append(tally.threefold_abc / tally.gated)
                errors.append(max(tally.threefold_abc, 1) ** 0.5 / tally.gated)

    sigma = None if n_pulses_per_point == 0 else errors
    try:
        fit = fit_dip(positions, rates, errors=sigma, fwhm_guess_mm=params.fwhm_mm)
        failed = None
    except FitFailureError as exc:
        fit = None
        failed = str(exc)
    return DipScanResult(tuple(positions), tuple(rates), tuple(errors), fit, failed, n_pulses_per_point == 0)
