"""The nine acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (visible with or without -s) before asserting.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from conftest import small_cfg
from tdpim.archcfg import PRESET_NAMES, area, config_to_dict, preset
from tdpim.cli import main
from tdpim.netspec import BUNDLED_NETWORKS, LayerSpec, bundled_network
from tdpim.o2ir import map_layer, naive_l1_reads, o2ir_l1_reads
from tdpim.perfmodel import (
    compare, evaluate, feature_ablation, interface_reduction, mac_latency_ns, peak_density,
    per_input_energy, pipeline_cycle,
)
from tdpim.tdcore import (
    NoiseModel, _hop_noise, integer_reference, margin_check, planes_from_codes, simulate_layer,
)

VGG = bundled_network("vgg_d")


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n} {title}: {detail}")
        assert ok, detail
    return emit


def test_1_vgg_l1_reads(verdict):
    want = {"conv1": (0.15, 1.35), "conv2": (3.21, 28.90), "conv3": (0.80, 7.23),
            "conv4": (1.61, 14.45), "conv5": (0.40, 3.61), "conv6": (0.80, 7.23)}
    layers = {l.name: l for l in VGG.layers}
    cfg = preset("timely_8b")
    t0 = time.perf_counter()
    ok, worst = True, 0.0
    for name, (o, n) in want.items():
        l = layers[name]
        map_layer(l, cfg)
        got_o, got_n = o2ir_l1_reads(l) / 1e6, naive_l1_reads(l) / 1e6
        err = max(abs(got_o - o) / o, abs(got_n - n) / n)
        worst = max(worst, err)
        ok &= err <= 0.01 and 1 - o2ir_l1_reads(l) / naive_l1_reads(l) == pytest.approx(8 / 9, abs=1e-12)
    dt = time.perf_counter() - t0
    ok &= dt < 1.0
    verdict(1, "VGG-D L1 input reads", ok, f"worst rel err {worst:.4%}, savings 88.9% on all six, {dt:.3f} s")


def test_2_area(verdict):
    a = area(preset("timely_8b"))
    ok = abs(a.subchip_area_mm2 - 0.86) <= 0.02 * 0.86 and abs(a.crossbar_fraction - 0.022) <= 0.003
    verdict(2, "area", ok, f"sub-Chip {a.subchip_area_mm2:.4f} mm2, crossbar {a.crossbar_fraction:.2%}")


def test_3_density(verdict):
    t8, t16, isaac = preset("timely_8b"), preset("timely_16b"), preset("isaac_like")
    d = peak_density(t8) / 1e12
    ratio = mac_latency_ns(isaac) / mac_latency_ns(t16)
    ok = abs(d - 38.33) <= 0.10 * 38.33 and pipeline_cycle(t8) == 200.0 and ratio == 5.5
    verdict(3, "density and pipeline", ok,
            f"{d:.2f} TOPs/s/mm2, cycle {pipeline_cycle(t8)} ns, 16-bit latency ratio {ratio}")


def test_4_analytical(verdict):
    cfg = preset("timely_8b")
    p = per_input_energy(cfg)
    q = interface_reduction(cfg)
    exact = (q["input_factor"] == cfg.e_dac_fj / cfg.e_dtc_fj * cfg.K_cb
             and q["psum_factor"] == cfg.e_adc_fj / cfg.e_tdc_fj * cfg.R_cb)
    ok = abs(p["ratio"] - p["n_cb_input"]) <= 0.10 * p["n_cb_input"] and exact
    verdict(4, "analytical ratios", ok,
            f"per-input ratio {p['ratio']:.3f} vs N_CB {p['n_cb_input']}, "
            f"q1*N_CB {q['input_factor']:.2f}, q2*N_CB {q['psum_factor']:.2f}")


def _random_case(rng):
    B = int(rng.choice([2, 4, 8, 16]))
    bpc = int(rng.choice([1, 2, 4]))
    wb = int(rng.integers(1, 9))
    if B % math.ceil(wb / bpc):
        wb = bpc
    ib = int(rng.integers(1, 9))
    cfg = small_cfg(B=B, R_cb=int(rng.integers(1, 5)), K_cb=int(rng.integers(1, 5)),
                    bpc=bpc, wb=wb, ib=ib)
    if rng.random() < 0.3:
        l = LayerSpec("fc", "fc", int(rng.integers(1, 40)), int(rng.integers(1, 6)), 1, 1, 1, 1,
                      weight_bits=wb, input_bits=ib)
    else:
        Z, S, P = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
        H = Z - 2 * P + S * int(rng.integers(0, 4))
        if H < 1:
            P, H = 0, Z
        l = LayerSpec("conv", "conv", int(rng.integers(1, 4)), int(rng.integers(1, 5)), H, H, Z, Z,
                      S=S, P=P, weight_bits=wb, input_bits=ib)
    top = (1 << wb) - 1
    codes = rng.integers(-top, top + 1, (l.D, l.C, l.Z, l.G))
    x = rng.integers(0, 1 << ib, (int(rng.integers(1, 3)), l.C, l.H, l.W))
    return cfg, l, codes, x


def test_5_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        cfg, l, codes, x = _random_case(rng)
        q = planes_from_codes(codes, 1.0, cfg)
        got = simulate_layer(x, q, map_layer(l, cfg), cfg)
        bad += not np.array_equal(got, integer_reference(x, codes, l))
    # exhaustive at B = 2: every 2-bit input pair against every signed 2-bit weight pair
    cfg = small_cfg(B=2, R_cb=1, K_cb=1, bpc=1, wb=2, ib=2)
    l = LayerSpec("fc", "fc", 2, 1, 1, 1, 1, 1, weight_bits=2, input_bits=2)
    m = map_layer(l, cfg)
    x = np.array(list(itertools.product(range(4), repeat=2)))
    n_exh = 0
    for w in itertools.product(range(-3, 4), repeat=2):
        codes = np.array(w).reshape(1, 2, 1, 1)
        got = simulate_layer(x, planes_from_codes(codes, 1.0, cfg), m, cfg)
        bad += not np.array_equal(got, integer_reference(x, codes, l))
        n_exh += len(x)
    dt = time.perf_counter() - t0
    verdict(5, "oracle equivalence", bad == 0 and dt < 60,
            f"{bad} mismatches over 1000 random layers + {n_exh} exhaustive B=2 cases, {dt:.1f} s")


def test_6_noise(verdict):
    cfg = preset("timely_8b")
    nm = NoiseModel(eps_x=25.0, enabled=True, seed=6)
    t = np.full((100_000, 1), 1e6)
    hops = np.arange(1, cfg.max_cascade + 1)
    stds = np.array([np.std(_hop_noise(t, int(h), nm, cfg, (0, 0, 0), 1) - 1e6) for h in hops])
    rel = np.max(np.abs(stds / (25.0 * np.sqrt(hops)) - 1))
    # margin relation at the configured eps, a sweep, and the boundary
    rel_ok = True
    for eps in (cfg.eps_x_ps, 100.0, 500.0, 1400.0, 2000.0):
        mc = margin_check(NoiseModel(eps_x=eps), cfg)
        rel_ok &= (mc.budget_ps == 40 * 2 ** 8 and math.isclose(mc.used_ps, math.sqrt(12) * eps)
                   and mc.passed == (mc.used_ps < mc.budget_ps / 2))
    edge = NoiseModel(eps_x=40 * 2 ** 8 / 2 / math.sqrt(12))
    rel_ok &= not margin_check(edge, cfg).passed
    rel_ok &= margin_check(NoiseModel(eps_x=edge.eps_x * 0.99), cfg).passed
    mc = margin_check(NoiseModel.from_config(cfg), cfg)
    verdict(6, "noise model", rel <= 0.05 and rel_ok,
            f"max deviation from sqrt(hops) scaling {rel:.2%}; margin {mc.used_ps:.1f} of "
            f"{mc.budget_ps / 2:.0f} ps at eps_x={cfg.eps_x_ps} ps")


def test_7_ledger(verdict):
    ok = True
    runs = 0
    for net_name in BUNDLED_NETWORKS:
        net = bundled_network(net_name)
        for p in PRESET_NAMES:
            e = evaluate(net, preset(p)).energy
            runs += 1
            ok &= sum(e.by_level.values()) == sum(e.by_type.values()) == e.total
    a, b = preset("timely_8b"), preset("prime_like")
    base = compare(evaluate(VGG, a), evaluate(VGG, b))
    ea = evaluate(VGG, a).energy
    for k in (1e-3, 3.7, 1e4):
        sc = lambda c: c.replace(**{f: getattr(c, f) * k for f in config_to_dict(c) if f.startswith("e_")})
        r = compare(evaluate(VGG, sc(a)), evaluate(VGG, sc(b)))
        es = evaluate(VGG, sc(a)).energy
        ok &= math.isclose(r.energy_efficiency_ratio, base.energy_efficiency_ratio, rel_tol=1e-12)
        ok &= r.l1_input_read_ratio == base.l1_input_read_ratio
        ok &= all(math.isclose(float(es.by_type[t] / es.total), float(ea.by_type[t] / ea.total),
                               rel_tol=1e-12, abs_tol=1e-15) for t in ea.by_type)
    verdict(7, "ledger consistency", ok, f"partitions agree on {runs} runs; ratios invariant under 3 rescalings")


def test_8_order_of_magnitude(verdict):
    a, b = preset("timely_8b"), preset("prime_like")
    c = compare(evaluate(VGG, a), evaluate(VGG, b))
    ab = feature_ablation(VGG, b)
    ok = c.energy_efficiency_ratio >= 5 and ab["alb_o2ir_share"] >= 0.9
    verdict(8, "order of magnitude", ok,
            f"efficiency ratio {c.energy_efficiency_ratio:.2f}x, ALB+O2IR share {ab['alb_o2ir_share']:.4f}")


def test_9_determinism(verdict, tmp_path, capsys):
    cmds = [
        ["map", "--net", "vgg_d"],
        ["report", "--net", "vgg_d", "--compare", "prime_like", "--seed", "7"],
        ["simulate", "--net", "mlp_784_64_10", "--noise", "on", "--eps-x", "300", "--seed", "7"],
    ]
    ok, files = True, 0
    for i, cmd in enumerate(cmds):
        dirs = [tmp_path / f"{i}{r}" for r in "ab"]
        for d in dirs:
            ok &= main(cmd + ["--out", str(d)]) == 0
        names = sorted(p.name for p in dirs[0].iterdir())
        ok &= names == sorted(p.name for p in dirs[1].iterdir())
        for n in names:
            ok &= (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes()
            files += 1
    capsys.readouterr()
    verdict(9, "determinism", ok, f"{files} files byte-identical across two runs of 3 commands")
