import json
import subprocess
import sys

import pytest

from relaysim.cli import main
from relaysim.components import ConfigurationError
from relaysim.config import (
    PRESET_NAMES,
    SCHEMA_VERSION,
    ScenarioConfig,
    load_config,
    load_preset,
    parse_config,
)
from relaysim.montecarlo import compile_scenario


# ---------------------------------------------------------------------------
# Configuration schema
# ---------------------------------------------------------------------------

def test_defaults_build_valid_models():
    cfg = ScenarioConfig()
    scenario = cfg.to_scenario()
    compile_scenario(scenario)  # validates
    params = cfg.to_link_params()
    assert params.fiber_loss_db_per_km == 0.2
    assert params.detector.dark_prob_per_gate == pytest.approx(1e-6, rel=1e-6)


def test_round_trip_is_identity():
    cfg = ScenarioConfig()
    once = parse_config(json.loads(cfg.dumps()))
    twice = parse_config(json.loads(once.dumps()))
    assert once == cfg
    assert twice == once


def test_unknown_keys_rejected_and_annotations_ignored():
    with pytest.raises(ConfigurationError):
        parse_config({"schema_version": 1, "fiber_loss_per_km": 0.2})
    cfg = parse_config({"schema_version": 1, "_note": "annotation", "fiber_loss_db_per_km": 0.25})
    assert cfg.fiber_loss_db_per_km == 0.25


def test_missing_keys_get_defaults():
    cfg = parse_config({"schema_version": 1})
    assert cfg == ScenarioConfig()


def test_wrong_schema_version_rejected():
    with pytest.raises(ConfigurationError):
        parse_config({"schema_version": SCHEMA_VERSION + 1})


def test_type_validation():
    with pytest.raises(ConfigurationError):
        parse_config({"pair_number_cutoff": 2.5})
    with pytest.raises(ConfigurationError):
        parse_config({"monitor_enabled": "yes"})
    with pytest.raises(ConfigurationError):
        parse_config({"photon_lineshape": 3})
    with pytest.raises(ConfigurationError):
        parse_config({"coupler_c1_anchors": [[0.0], [30.0, 0.5]]})
    with pytest.raises(ConfigurationError):
        parse_config({"delay_mm": "far"})


def test_load_config_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_every_preset_is_schema_valid():
    for name in PRESET_NAMES:
        cfg = load_preset(name)
        assert cfg.schema_version == SCHEMA_VERSION
        compile_scenario(cfg.to_scenario())


def test_preset_fig6_pins_operating_point():
    cfg = load_preset("paper-fig6")
    sc = cfg.to_scenario()
    assert sc.external_source.mean_pairs == pytest.approx(0.05, rel=1e-9)
    assert sc.chip_source.mean_pairs == pytest.approx(0.02, rel=1e-9)
    assert sc.tau_fwhm_ps == 20.0
    assert sc.detector_a.efficiency == 0.1
    assert sc.detector_a.dark_prob_per_ns == 1e-5


def test_preset_fig2_pins_link_parameters():
    params = load_preset("paper-fig2").to_link_params()
    assert params.fiber_loss_db_per_km == 0.2
    assert params.detector.efficiency == 0.1
    assert params.teleport_fidelity == 0.8
    assert params.chip_insertion_loss_db == 9.0


def test_unknown_preset_rejected():
    with pytest.raises(ConfigurationError):
        load_preset("paper-fig99")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def run_cli(*argv) -> int:
    return main(list(argv))


def test_spdc_spectrum_csv(tmp_path, capsys):
    out = tmp_path / "spectrum.csv"
    assert run_cli("spdc-spectrum", "--preset", "paper-fig3", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "wavelength_nm,relative_density"
    rows = [line.split(",") for line in lines[1:]]
    lams = [float(r[0]) for r in rows]
    dens = [float(r[1]) for r in rows]
    assert max(dens) == pytest.approx(1.0, abs=1e-6)
    # FWHM of the emitted curve is 80 nm within the grid resolution.
    above = [x for x, d in zip(lams, dens) if d >= 0.5]
    assert max(above) - min(above) == pytest.approx(80.0, abs=1.0)


def test_coupler_curve_csv(tmp_path, capsys):
    out = tmp_path / "couplers.csv"
    assert run_cli("coupler-curve", "--preset", "paper-fig4", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "voltage_V,cross_ratio_c1,cross_ratio_c2"
    table = {float(r[0]): (float(r[1]), float(r[2])) for r in (l.split(",") for l in lines[1:])}
    assert table[0.0][0] == pytest.approx(1.0, abs=1e-9)
    assert table[30.0][0] == pytest.approx(0.5, abs=1e-6)
    summary = capsys.readouterr().out
    assert "residual_rms" in summary


def test_coupler_curve_anchor_csv(tmp_path, capsys):
    anchors = tmp_path / "anchors.csv"
    anchors.write_text("voltage_V,cross_ratio\n0.0,1.0\n25.0,0.5\n", encoding="utf-8")
    out = tmp_path / "couplers.csv"
    assert run_cli("coupler-curve", "--anchors-csv", str(anchors), "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    table = {float(r[0]): float(r[1]) for r in (l.split(",") for l in lines[1:])}
    assert table[25.0] == pytest.approx(0.5, abs=1e-6)
    bad = tmp_path / "bad.csv"
    bad.write_text("volts,ratio\n0,1\n", encoding="utf-8")
    assert run_cli("coupler-curve", "--anchors-csv", str(bad)) == 2


def test_structured_text_table_format(tmp_path):
    out = tmp_path / "spectrum.txt"
    assert run_cli("spdc-spectrum", "--format", "structured-text", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# columns: wavelength_nm, relative_density"


def test_visibility_map_csv(tmp_path, capsys):
    out = tmp_path / "map.csv"
    assert run_cli("visibility-map", "--preset", "paper-fig5", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "N_a,N_b,visibility"
    assert len(lines) == 1 + 20 * 20
    summary = capsys.readouterr().out
    # The summary states the operating-point values and the gap to the
    # reference target (which this model family does not reach).
    assert "0.5483870967741935" in summary
    assert "0.7083333333333334" in summary
    assert "reference_target=0.75" in summary
    assert "gap_low_efficiency" in summary


def test_hom_dip_analytic_mode(tmp_path, capsys):
    out = tmp_path / "dip.csv"
    assert run_cli("hom-dip", "--preset", "paper-fig6", "--pulses", "0", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "position_mm,threefold_rate,error"
    assert len(lines) == 1 + 13
    summary = capsys.readouterr().out
    fwhm = float(next(l for l in summary.splitlines() if l.startswith("fit_fwhm_mm=")).split("=")[1])
    assert fwhm == pytest.approx(6.0, rel=5e-3)


def test_keyrate_sweep_summary(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    assert run_cli("keyrate-sweep", "--preset", "paper-fig2", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "distance_km,direct,standard_relay,folded_relay,folded_relay_lossless"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == pytest.approx(1.0, rel=1e-12)
    summary = {}
    for line in capsys.readouterr().out.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            summary[key] = float(value.split()[0])
    assert 200.0 <= summary["max_distance_direct_km"] <= 300.0
    assert 1.6 <= summary["gain_lossless"] <= 2.0
    assert 1.25 <= summary["gain_realistic_chip"] <= 1.55


def test_mc_run_byte_identical(tmp_path):
    out1 = tmp_path / "r1.txt"
    out2 = tmp_path / "r2.txt"
    args = ["mc-run", "--seed", "1", "--pulses", "50000", "--out"]
    assert run_cli(*args, str(out1)) == 0
    assert run_cli(*args, str(out2)) == 0
    assert out1.read_bytes() == out2.read_bytes()
    text = out1.read_text()
    assert text.startswith("pulses_simulated: 50000\n")
    assert "net_visibility:" in text


def test_mc_run_worker_count_invariance(tmp_path):
    out1 = tmp_path / "w1.txt"
    out2 = tmp_path / "w2.txt"
    base = ["mc-run", "--seed", "5", "--pulses", "60000"]
    assert run_cli(*base, "--workers", "1", "--out", str(out1)) == 0
    assert run_cli(*base, "--workers", "2", "--out", str(out2)) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_mc_run_csv_format(tmp_path):
    out = tmp_path / "report.csv"
    assert run_cli("mc-run", "--pulses", "20000", "--format", "csv", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "field,value"
    assert lines[1].startswith("pulses_simulated,")


def test_config_flag_round_trip(tmp_path):
    config_path = tmp_path / "custom.json"
    config_path.write_text(ScenarioConfig(delay_mm=2.5).dumps(), encoding="utf-8")
    out = tmp_path / "rep.txt"
    assert run_cli("mc-run", "--config", str(config_path), "--pulses", "20000", "--out", str(out)) == 0
    assert "delay_mm: 2.5" in out.read_text()


def test_cli_error_paths(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"no_such_key": 1}', encoding="utf-8")
    assert run_cli("mc-run", "--config", str(bad)) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigurationError:")
    # Unknown subcommands and flags exit nonzero via argparse.
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["mc-run", "--no-such-flag"])
    assert exc.value.code != 0


def test_cli_entry_point_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "relaysim.cli", "keyrate-sweep", "--preset", "paper-fig2"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "gain_lossless" in proc.stdout
