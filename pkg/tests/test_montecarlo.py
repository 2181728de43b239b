import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import bench_scenario, oracle_scenarios, single_photon_scenario
from relaysim.components import ConfigurationError, FilterModel
from relaysim.montecarlo import (
    CounterRng,
    analytic_twofold_visibility,
    analytic_visibility,
    compile_scenario,
    derive_key,
    expected_rates,
    run,
    scan_dip,
    subtract_accidentals,
)
from relaysim.photostats import custom


# ---------------------------------------------------------------------------
# Counter RNG
# ---------------------------------------------------------------------------

def test_rng_deterministic_and_decomposition_independent():
    rng = CounterRng(derive_key(1, "dip"))
    full = rng.uniform(np.arange(0, 1000, dtype=np.uint64), 7)
    first = rng.uniform(np.arange(0, 400, dtype=np.uint64), 7)
    second = rng.uniform(np.arange(400, 1000, dtype=np.uint64), 7)
    assert np.array_equal(full, np.concatenate([first, second]))


def test_rng_uniformity_basic():
    rng = CounterRng(derive_key(123, "check"))
    u = rng.uniform(np.arange(0, 200_000, dtype=np.uint64), 0)
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1.0 / 12.0) < 0.005
    v = rng.uniform(np.arange(0, 200_000, dtype=np.uint64), 1)
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.01


def test_derive_key_separates_streams():
    keys = {derive_key(1, "dip"), derive_key(1, "ref"), derive_key(2, "dip"), derive_key(1, "scan", 0)}
    assert len(keys) == 4


# ---------------------------------------------------------------------------
# Physical limits
# ---------------------------------------------------------------------------

def test_perfect_bunching_at_zero_delay():
    # One photon in each port, perfect overlap: never a cross-output coincidence.
    report = run(single_photon_scenario(0.0), 20_000, seed=3)
    assert report.dip.twofold_ab == 0
    assert report.dip.threefold_abc == 0
    # Three photons per pulse (external + chip pair); the pair partner is
    # absorbed on the port-C arm, the two interfering photons are detected.
    assert report.dip.generated == 3 * report.dip.gated
    assert report.dip.detected == 2 * report.dip.gated
    assert report.dip.lost == report.dip.gated


def test_distinguishable_photons_coincide_half_the_time():
    # Far outside the dip the balanced coupler splits pairs 50/50.
    report = run(single_photon_scenario(500.0), 50_000, seed=3)
    rate = report.dip.twofold_ab / report.dip.gated
    assert rate == pytest.approx(0.5, abs=3.0 * math.sqrt(0.25 / 50_000))


def test_overlap_peak_is_timing_bound():
    sc = bench_scenario(0.01, 0.01, pump_ps=2.5)
    params = compile_scenario(sc)
    tau_c = sc.photon_mode.coherence_time_ps
    assert params.overlap_peak == pytest.approx(1.0 / math.sqrt((2.5 / tau_c) ** 2 + 1.0), rel=1e-12)
    assert params.overlap_at(1e9) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Monte Carlo against the exact enumeration
# ---------------------------------------------------------------------------

def test_mc_matches_exact_enumeration():
    sc = bench_scenario(0.05, 0.02)
    n = 2_000_000
    report = run(sc, n, seed=11)
    exact_dip = expected_rates(sc)
    exact_ref = expected_rates(sc, overlap=0.0)

    def check(count, expected_prob):
        expected = expected_prob * n
        assert abs(count - expected) <= 4.0 * math.sqrt(max(expected, 1.0))

    check(report.dip.threefold_abc, exact_dip.p_threefold_abc)
    check(report.ref.threefold_abc, exact_ref.p_threefold_abc)
    check(report.dip.twofold_ab, exact_dip.p_twofold_ab)
    check(report.dip.singles_a, exact_dip.p_single_a)
    check(report.dip.singles_b, exact_dip.p_single_b)
    check(report.dip.singles_c, exact_dip.p_single_c)


def test_mc_matches_enumeration_unbalanced_coupler():
    # Away from the 50/50 point the 1+1 coincidence probability follows
    # bar^2 + cross^2 - 2 bar cross O; sampler and enumeration must agree.
    sc = replace(bench_scenario(0.05, 0.02), coupler_c2_voltage_v=20.0)
    t2 = compile_scenario(sc).cross2
    assert not 0.45 < t2 < 0.55
    n = 1_000_000
    report = run(sc, n, seed=47)
    for tally, overlap in ((report.dip, None), (report.ref, 0.0)):
        exact = expected_rates(sc) if overlap is None else expected_rates(sc, overlap=0.0)
        for count, prob in (
            (tally.twofold_ab, exact.p_twofold_ab),
            (tally.threefold_abc, exact.p_threefold_abc),
        ):
            assert abs(count - prob * n) <= 4.0 * math.sqrt(max(prob * n, 1.0))


def test_mc_matches_enumeration_with_darks():
    sc = bench_scenario(0.02, 0.01, dark_per_ns=1e-4, gate_window_ns=10.0)
    n = 500_000
    report = run(sc, n, seed=5)
    exact = expected_rates(sc)
    for count, prob in (
        (report.dip.singles_a, exact.p_single_a),
        (report.dip.singles_c, exact.p_single_c),
        (report.dip.threefold_abc, exact.p_threefold_abc),
    ):
        assert abs(count - prob * n) <= 4.0 * math.sqrt(max(prob * n, 1.0))


# ---------------------------------------------------------------------------
# Oracle equivalence: statistics-and-timing prediction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name,scenario", oracle_scenarios())
def test_visibility_matches_closed_form(name, scenario):
    # Cheap version of the acceptance run (1e6 pulses; the acceptance suite
    # repeats this at 1e7 gated pulses): 3 sigma agreement.
    report = run(scenario, 1_000_000, seed=29)
    net = subtract_accidentals(report)
    predicted = analytic_visibility(scenario).v_total
    assert math.isfinite(net.net_visibility_err)
    assert abs(net.net_visibility - predicted) <= 3.0 * net.net_visibility_err


def test_twofold_thermal_visibility_one_third():
    # Equal coupler-level means: the two-fold dip shows the thermal 1/3.
    # A 3 dB external arm loss halves the external mean; C1 halves the chip one.
    sc = bench_scenario(0.02, 0.02, alice_db=10.0 * math.log10(2.0))
    predicted = analytic_twofold_visibility(sc)
    assert predicted.v_statistics == pytest.approx(1.0 / 3.0, abs=1e-9)
    report = run(sc, 2_000_000, seed=17)
    v = report.raw_twofold_visibility
    err = report.raw_twofold_visibility_err
    assert abs(v - predicted.v_total) <= 3.0 * err


# ---------------------------------------------------------------------------
# Tally invariants
# ---------------------------------------------------------------------------

def test_photon_conservation_and_count_ordering():
    sc = bench_scenario(0.05, 0.02, dark_per_ns=1e-5)
    report = run(sc, 300_000, seed=7)
    for leg in (report.dip, report.ref):
        assert leg.generated == leg.lost + leg.undetected + leg.detected
        assert leg.threefold_abc <= min(leg.twofold_ab, leg.singles_c)
        assert leg.twofold_ab <= min(leg.singles_a, leg.singles_b)


def test_monitor_counts_partner_photons():
    sc = replace(bench_scenario(0.05, 0.02), monitor_enabled=True)
    report = run(sc, 200_000, seed=9)
    assert report.dip.singles_monitor > 0
    # Partner photons join the conservation ledger.
    assert report.dip.generated == report.dip.lost + report.dip.undetected + report.dip.detected


def test_gating_fraction():
    sc = bench_scenario(0.01, 0.01, gate_rate_hz=600e3)
    sc = replace(sc, pump_repetition_rate_hz=76e6)
    n = 2_000_000
    report = run(sc, n, seed=13)
    p = 600e3 / 76e6
    assert abs(report.dip.gated - n * p) <= 4.0 * math.sqrt(n * p * (1 - p))


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

def test_bit_identical_reports_same_seed():
    sc = bench_scenario(0.05, 0.02, dark_per_ns=1e-5)
    assert run(sc, 150_000, seed=21) == run(sc, 150_000, seed=21)


def test_different_seeds_differ():
    sc = bench_scenario(0.05, 0.02)
    assert run(sc, 150_000, seed=1) != run(sc, 150_000, seed=2)


def test_worker_count_does_not_change_tallies():
    sc = bench_scenario(0.05, 0.02)
    n = 4_200_000  # spans three fixed batches
    serial = run(sc, n, seed=33, workers=1)
    parallel = run(sc, n, seed=33, workers=2)
    assert serial == parallel


# ---------------------------------------------------------------------------
# Accidental subtraction
# ---------------------------------------------------------------------------

def test_zero_darks_net_equals_raw():
    report = run(bench_scenario(0.05, 0.02), 400_000, seed=19)
    net = subtract_accidentals(report)
    assert net.accidental_threefold_dip == 0.0
    assert net.net_threefold_dip == pytest.approx(report.dip.threefold_abc / report.dip.gated)
    assert net.net_visibility == pytest.approx(report.raw_visibility, rel=1e-12)


def test_signal_free_scenario_consistent_with_zero():
    # Sources off: three-fold clicks are pure dark accidentals.
    sc = bench_scenario(0.0, 0.0, dark_per_ns=0.01, gate_window_ns=5.0)
    n = 1_000_000
    report = run(sc, n, seed=23)
    assert report.dip.threefold_abc > 0  # darks do fire
    net = subtract_accidentals(report)
    err = math.sqrt(report.dip.threefold_abc) / report.dip.gated
    assert abs(net.net_threefold_dip) <= 4.0 * err


def test_raw_below_net_with_darks():
    sc = bench_scenario(0.01, 0.005, dark_per_ns=1e-5, gate_window_ns=20.0)
    report = run(sc, 4_000_000, seed=31)
    net = subtract_accidentals(report)
    assert net.accidental_threefold_dip > 0.0
    assert report.raw_visibility < net.net_visibility


# ---------------------------------------------------------------------------
# Dip scan
# ---------------------------------------------------------------------------

def test_analytic_scan_reproduces_dip_profile():
    sc = replace(bench_scenario(0.01, 0.005), dip_fwhm_time_ps=20.0)
    positions = np.linspace(-9.0, 9.0, 13)
    result = scan_dip(sc, positions, n_pulses_per_point=0)
    assert result.analytic and result.converged
    # The expected-value scan is exactly gaussian: the fit reproduces the
    # model width and the enumeration's own dip depth to numerical precision.
    fwhm_expected = compile_scenario(sc).fwhm_mm
    assert result.fit.fwhm_mm == pytest.approx(fwhm_expected, rel=1e-6)
    v_exact = 1.0 - expected_rates(sc).p_threefold_abc / expected_rates(sc, overlap=0.0).p_threefold_abc
    assert result.fit.visibility == pytest.approx(v_exact, rel=1e-6)
    # The closed-form statistics-and-timing product is the truncated
    # approximation; at these means it agrees to a couple of percent.
    predicted = analytic_visibility(sc).v_total
    assert result.fit.visibility == pytest.approx(predicted, abs=0.03)


def test_mc_scan_recovers_width():
    # Bright sources: width recovery only needs counts, not low means.
    sc = replace(bench_scenario(0.2, 0.1, eta=0.9), dip_fwhm_time_ps=20.0)
    positions = np.linspace(-9.0, 9.0, 9)
    result = scan_dip(sc, positions, n_pulses_per_point=400_000, seed=41)
    assert result.converged
    assert result.fit.fwhm_mm == pytest.approx(compile_scenario(sc).fwhm_mm, rel=0.10)


def test_scan_preconditions():
    sc = bench_scenario(0.01, 0.01)
    with pytest.raises(ValueError):
        scan_dip(sc, [0.0, 1.0], 0)
    with pytest.raises(ValueError):
        scan_dip(sc, [-1.0, 0.0, 1.0], 0)  # span below twice the dip width


# ---------------------------------------------------------------------------
# Scenario validation
# ---------------------------------------------------------------------------

def test_invalid_scenarios_rejected_before_sampling():
    with pytest.raises(ConfigurationError):
        compile_scenario(replace(bench_scenario(0.01, 0.01), gate_rate_hz=100e6))
    with pytest.raises(ConfigurationError):
        compile_scenario(replace(bench_scenario(0.01, 0.01), pair_number_cutoff=0))
    with pytest.raises(ConfigurationError):
        compile_scenario(replace(bench_scenario(0.01, 0.01), pair_number_cutoff=50))
    with pytest.raises(ConfigurationError):
        compile_scenario(replace(bench_scenario(0.01, 0.01), delay_mm=float("nan")))
    # Overlapping signal/partner filter bands break clean heralding.
    with pytest.raises(ConfigurationError):
        compile_scenario(
            replace(bench_scenario(0.01, 0.01), filter_c=FilterModel(1532.0, 8000.0))
        )
    with pytest.raises(ValueError):
        run(bench_scenario(0.01, 0.01), 0)


def test_pattern_cutoff_clamps_distribution():
    sc = replace(bench_scenario(0.01, 0.01), external_distribution=custom([0.0] * 20 + [1.0]))
    params = compile_scenario(sc)
    assert params.cdf_a.shape[0] == 21
