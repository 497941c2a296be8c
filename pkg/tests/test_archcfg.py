from __future__ import annotations

import json
import math
import shutil

import pytest

from tdpim.archcfg import (
    PRESET_NAMES, ConfigError, area, emit_config, parse_config, preset, threshold_voltage,
    validate_config,
)


def test_timely_published_values(timely):
    c = timely
    assert (c.B, c.R_cb, c.K_cb, c.gamma, c.chi, c.bits_per_cell) == (256, 16, 12, 8, 106, 4)
    assert (c.t_del_ps, c.t_conv_ns, c.t_read_ns, c.t_analog_ns, c.t_write_ns, c.clock_mhz) == (50, 25, 16, 150, 160, 40)
    assert c.e_dtc_fj == 37.5 and c.e_tdc_fj == 145 and c.e_xbar_eval_fj == 1792
    assert (c.e_charge_cmp_fj, c.e_x_fj, c.e_p_fj, c.e_iadder_fj) == (41.7, 0.62, 2.3, 36.8)
    assert (c.e_relu_fj, c.e_maxpool_fj, c.e_r2_read_fj, c.e_r2_write_fj, c.e_link_fj) == (205, 330, 12736, 31039, 1620)
    assert (c.a_dtc_um2, c.a_tdc_um2, c.a_xbar_um2, c.a_charge_cmp_um2) == (240, 310, 100, 40)
    assert (c.a_x_um2, c.a_p_um2, c.a_iadder_um2, c.a_relu_um2, c.a_maxpool_um2) == (5, 5, 40, 300, 240)
    assert (c.a_buf_in_um2, c.a_buf_out_um2) == (50, 50)
    assert (c.n_dtc, c.n_tdc, c.n_x, c.n_p) == (16 * 32, 12 * 32, 49_152, 15 * 12 * 256)
    assert (c.n_charge_cmp, c.n_iadder, c.n_relu, c.n_maxpool) == (3072, 3072, 2, 1)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_validate(name):
    assert validate_config(preset(name)) == []


def test_baseline_styles():
    for name in ("prime_like", "isaac_like"):
        c = preset(name)
        assert (c.interface_style, c.buffer_style, c.mapping_style) == ("voltage_domain", "hierarchical", "naive")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("nope")


def test_violations(timely):
    assert any("B mod gamma" in v for v in validate_config(timely.replace(gamma=7)))
    assert any(v.startswith("e_x_fj") and "nonpositive energy" in v for v in validate_config(timely.replace(e_x_fj=0.0)))
    assert any("a_tdc_um2" in v for v in validate_config(timely.replace(a_tdc_um2=-1.0)))
    assert any("n_dtc" in v for v in validate_config(timely.replace(n_dtc=5)))
    assert any("interface_style" in v for v in validate_config(timely.replace(interface_style="optical")))
    assert any("dtc_bits" in v for v in validate_config(timely.replace(tdc_bits=7)))


def test_area_matches_table_total(timely):
    a = area(timely)
    assert a.subchip_area_mm2 == pytest.approx(0.86, rel=0.02)
    assert a.subchip_area_mm2 == pytest.approx(0.8611, abs=1e-9)
    assert a.crossbar_fraction == pytest.approx(0.022, abs=0.003)
    assert a.components_um2["iadder"] == 0
    assert a.chip_area_mm2 == pytest.approx(106 * a.subchip_area_mm2)


def test_area_component_sum(timely):
    a = area(timely)
    assert math.fsum(a.components_um2.values()) * 1e-6 == pytest.approx(a.subchip_area_mm2)
    assert a.components_um2["x_buf"] == 49_152 * 5


def test_chi_scaling(timely):
    one, two = area(timely.replace(chi=1)), area(timely.replace(chi=212))
    assert one.chip_area_mm2 == one.subchip_area_mm2
    assert two.chip_area_mm2 == pytest.approx(212 * one.subchip_area_mm2)
    assert one.crossbar_fraction == two.crossbar_fraction


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_round_trip(name):
    c = preset(name)
    text = emit_config(c)
    assert parse_config(text) == c
    assert emit_config(parse_config(text)) == text


def test_parse_errors(timely):
    d = json.loads(emit_config(timely))
    d.pop("B")
    with pytest.raises(ConfigError, match="missing config fields"):
        parse_config(json.dumps(d))
    d = json.loads(emit_config(timely))
    d["B"] = 1.5
    with pytest.raises(ConfigError, match="B: expected integer"):
        parse_config(json.dumps(d))
    with pytest.raises(ConfigError, match="unknown config fields"):
        parse_config(json.dumps({**json.loads(emit_config(timely)), "zz": 1}))


def test_preset_dir_env(tmp_path, monkeypatch):
    src = preset("timely_8b")
    shutil.copy(__import__("tdpim.archcfg").archcfg.preset_dir() / "timely_8b.json", tmp_path / "mine.json")
    monkeypatch.setenv("TDPIM_PRESET_DIR", str(tmp_path))
    assert preset("mine") == src


def test_threshold_voltage(timely):
    # B*N_CB*T~*V_DD/(R_min*C_c) with T~ = 256 * 50 ps
    v = threshold_voltage(timely, timely.R_cb)
    assert v == pytest.approx(256 * 16 * 12.8e-9 * 1.2 / (1e6 * 1e-10))


def test_rebind_counts_for_voltage_hierarchical(timely):
    c = timely.replace(interface_style="voltage_domain", buffer_style="hierarchical").rebind_counts()
    assert (c.n_dtc, c.n_tdc, c.n_x, c.n_p, c.n_iadder) == (0, 0, 0, 0, 0)
    assert c.n_dac == c.n_adc == 16 * 12 * 32
    assert validate_config(c) == []
