"""Energy ledger, pipeline/throughput model, analytical formulas and comparisons.

Every counted event carries a unit energy, a memory level and a data type, so
the ledger rolls up the same joules along two independent partitions.
Sums use exact rationals and are converted to floats only for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .archcfg import ArchConfig, area
from .netspec import NetworkSpec, layer_stats
from .o2ir import AccessCounts, count_network, map_network

MEMORY_LEVELS = ("compute", "local", "L1", "L2", "L3")
DATA_TYPES = ("input", "psum", "output", "weight")
COMPONENTS = (
    "dtc/dac", "tdc/adc", "xbar", "charge_cmp", "iadder", "x_buf", "p_buf",
    "l1_in", "l1_out", "l2", "link", "relu", "maxpool",
)

# event -> (unit energy field, component, memory level, data type)
EVENTS = {
    "l1_input_reads": ("e_r2_read_fj", "l1_in", "L1", "input"),
    "l1_input_refetches": ("e_r2_read_fj", "l1_in", "L1", "input"),
    "dtc_conversions": ("e_dtc_fj", "dtc/dac", "compute", "input"),
    "dac_conversions": ("e_dac_fj", "dtc/dac", "compute", "input"),
    "x_hops": ("e_x_fj", "x_buf", "local", "input"),
    "xbar_evals": ("e_xbar_eval_fj", "xbar", "compute", "psum"),
    "p_hops": ("e_p_fj", "p_buf", "local", "psum"),
    "iadder_ops": ("e_iadder_fj", "iadder", "local", "psum"),
    "charge_cmp_ops": ("e_charge_cmp_fj", "charge_cmp", "compute", "psum"),
    "tdc_conversions": ("e_tdc_fj", "tdc/adc", "compute", "psum"),
    "adc_conversions": ("e_adc_fj", "tdc/adc", "compute", "psum"),
    "l1_psum_reads": ("e_r2_read_fj", "l1_out", "L1", "psum"),
    "l1_psum_writes": ("e_r2_write_fj", "l1_out", "L1", "psum"),
    "l1_output_writes": ("e_r2_write_fj", "l1_out", "L1", "output"),
    "l2_reads": ("e_l2_read_fj", "l2", "L2", "input"),
    "l2_writes": ("e_l2_write_fj", "l2", "L2", "output"),
    "link_transfers": ("e_link_fj", "link", "L3", "output"),
    "relu_ops": ("e_relu_fj", "relu", "compute", "output"),
    "maxpool_ops": ("e_maxpool_fj", "maxpool", "compute", "output"),
}

ASSUMPTIONS = {
    "op_definition": "1 operation = 1 MAC at the configured weight/input width",
    "buffer_word": "L1 input/output buffer energies are per 8-bit access",
    "l2_energy": "L2 read/write energy = 146.7x / 6.9x the L1 read/write energy",
    "l2_read_words": "hierarchical styles refill inputs from L2 at l2_read_words words per access",
    "reset_phase": "reset-phase energy is folded into the charge/compare energy",
    "padding": "padded zeros are neither L1 reads nor converter events",
    "link": "one link event per 16-bit word leaving a chip",
    "absolute_energy": "absolute joules depend on the per-event semantics above and are not calibrated",
}


class EnergyError(ValueError):
    pass


@dataclass
class EnergyReport:
    by_component: dict
    by_level: dict
    by_type: dict
    total: Fraction
    per_layer: list = field(default_factory=list)   # [(layer name, {component: J})]
    events: list = field(default_factory=list)      # [(layer name, event, count, unit fJ, J)]

    @property
    def total_j(self) -> float:
        return float(self.total)

    def as_dict(self) -> dict:
        f = lambda d: {k: float(v) for k, v in d.items()}
        return {
            "total_j": float(self.total),
            "by_component_j": f(self.by_component),
            "by_memory_level_j": f(self.by_level),
            "by_data_type_j": f(self.by_type),
            "per_layer_j": [{"layer": n, **f(c)} for n, c in self.per_layer],
        }


def _fj_to_j(x) -> Fraction:
    return Fraction(x) / 10 ** 15


def energy_ledger(net: NetworkSpec, mappings: list, cfg: ArchConfig, counts: list) -> EnergyReport:
    if len(counts) != len(net.layers):
        raise EnergyError(f"{len(counts)} count records for {len(net.layers)} layers")
    comp = {c: Fraction(0) for c in COMPONENTS}
    lvl = {c: Fraction(0) for c in MEMORY_LEVELS}
    typ = {c: Fraction(0) for c in DATA_TYPES}
    per_layer, events = [], []
    for layer, c in zip(net.layers, counts):
        here = {k: Fraction(0) for k in COMPONENTS}
        for ev, n in c.as_dict().items():
            if ev not in EVENTS:
                raise EnergyError(f"no unit energy for event class {ev!r}")
            if not n:
                continue
            unit_f, cname, level, dtype = EVENTS[ev]
            unit = getattr(cfg, unit_f)
            e = _fj_to_j(unit) * n
            here[cname] += e
            lvl[level] += e
            typ[dtype] += e
            events.append((layer.name, ev, n, unit, e))
        for k, v in here.items():
            comp[k] += v
        per_layer.append((layer.name, here))
    total = sum(comp.values(), Fraction(0))
    return EnergyReport(comp, lvl, typ, total, per_layer, events)


# -- pipeline and throughput --------------------------------------------------------

def pipeline_cycle(cfg: ArchConfig) -> float:
    """Slowest of L1 read, gamma DTC conversions, analog, gamma TDC conversions, L1 write (ns)."""
    if cfg.cycle_override_ns is not None:
        return cfg.cycle_override_ns
    conv = cfg.gamma * cfg.t_conv_ns
    return max(cfg.t_read_ns, conv, cfg.t_analog_ns, conv, cfg.t_write_ns)


def mac_latency_ns(cfg: ArchConfig) -> float:
    return cfg.cycles_per_mac * pipeline_cycle(cfg)


def peak_macs_per_eval(cfg: ArchConfig) -> int:
    return cfg.R_cb * cfg.K_cb * cfg.B * cfg.B // cfg.cells_per_weight


def peak_density(cfg: ArchConfig) -> float:
    """Peak ops/s per mm^2 with every cell of a sub-Chip mapped."""
    ops = peak_macs_per_eval(cfg) / (mac_latency_ns(cfg) * 1e-9)
    return ops / area(cfg).subchip_area_mm2


@dataclass
class PerfReport:
    pipeline_cycle_ns: float
    mac_latency_ns: float
    layer_latency_ns: list          # [(layer name, ns)]
    throughput_ops: float           # steady state, ops/s
    inference_rate: float           # inferences/s
    power_w: float
    energy_efficiency: float        # ops/J
    computational_density: float    # peak ops/s/mm^2
    chip_area_mm2: float
    subchips_used: int
    macs: int

    def as_dict(self) -> dict:
        return {
            "pipeline_cycle_ns": self.pipeline_cycle_ns,
            "mac_latency_ns": self.mac_latency_ns,
            "layer_latency_ns": [{"layer": n, "ns": v} for n, v in self.layer_latency_ns],
            "throughput_ops_per_s": self.throughput_ops,
            "inference_rate_per_s": self.inference_rate,
            "power_w": self.power_w,
            "energy_efficiency_ops_per_j": self.energy_efficiency,
            "computational_density_ops_per_s_mm2": self.computational_density,
            "chip_area_mm2": self.chip_area_mm2,
            "subchips_used": self.subchips_used,
            "macs": self.macs,
        }


class CapacityExceeded(ValueError):
    pass


def throughput(net: NetworkSpec, mappings: list, cfg: ArchConfig, chips: int = 1,
               energy: EnergyReport | None = None) -> PerfReport:
    used = sum(m.subchips for m in mappings if m is not None)
    if used > chips * cfg.chi:
        raise CapacityExceeded(f"mappings use {used} sub-Chips, {chips * cfg.chi} available")
    lat = mac_latency_ns(cfg)
    per_eval = sum(m.macs_per_eval() for m in mappings if m is not None)
    ops = per_eval / (lat * 1e-9) if per_eval else 0.0
    layer_lat = []
    for layer, m in zip(net.layers, mappings):
        evals = m.passes * layer.F * net.batch if m is not None else 0
        layer_lat.append((layer.name, evals * lat))
    slowest = max((v for _, v in layer_lat), default=0.0)
    macs = sum(layer_stats(l, net.batch).macs for l in net.layers)
    e = energy.total_j if energy is not None else 0.0
    eff = macs / e if e else 0.0
    a = area(cfg)
    return PerfReport(
        pipeline_cycle_ns=pipeline_cycle(cfg),
        mac_latency_ns=lat,
        layer_latency_ns=layer_lat,
        throughput_ops=ops,
        inference_rate=1e9 / slowest if slowest else 0.0,
        power_w=ops / eff if eff else 0.0,
        energy_efficiency=eff,
        computational_density=peak_density(cfg),
        chip_area_mm2=chips * a.chip_area_mm2,
        subchips_used=used,
        macs=macs,
    )


# -- analytical formulas ------------------------------------------------------------

def per_input_energy(cfg: ArchConfig, n_cb: int | None = None) -> dict:
    """Per-input and per-psum buffer energy, per-crossbar buffering vs analog local buffers.

    Inputs fan out across K_cb crossbar columns and psums aggregate over R_cb
    crossbar rows unless `n_cb` overrides both.
    """
    n_in = n_cb if n_cb is not None else cfg.K_cb
    n_ps = n_cb if n_cb is not None else cfg.R_cb
    base_in = cfg.e_r2_read_fj
    alb_in = cfg.e_r2_read_fj / n_in + cfg.e_x_fj
    e_r2_ps = cfg.e_r2_write_fj + cfg.e_r2_read_fj
    base_ps = e_r2_ps
    alb_ps = e_r2_ps / n_ps + cfg.e_p_fj
    return {
        "n_cb_input": n_in,
        "n_cb_psum": n_ps,
        "baseline_fj": base_in,
        "alb_fj": alb_in,
        "ratio": base_in / alb_in,
        "psum_baseline_fj": base_ps,
        "psum_alb_fj": alb_ps,
        "psum_ratio": base_ps / alb_ps,
    }


def interface_reduction(cfg: ArchConfig, n_cb: int | None = None) -> dict:
    """(e_dac/e_dtc)*N_CB for inputs and (e_adc/e_tdc)*N_CB for psums."""
    n_in = n_cb if n_cb is not None else cfg.K_cb
    n_ps = n_cb if n_cb is not None else cfg.R_cb
    return {
        "q1": cfg.e_dac_fj / cfg.e_dtc_fj,
        "q2": cfg.e_adc_fj / cfg.e_tdc_fj,
        "input_factor": cfg.e_dac_fj / cfg.e_dtc_fj * n_in,
        "psum_factor": cfg.e_adc_fj / cfg.e_tdc_fj * n_ps,
    }


# -- whole-network evaluation and comparison -------------------------------------------

@dataclass
class Evaluation:
    net: NetworkSpec
    cfg: ArchConfig
    mappings: list
    counts: list
    energy: EnergyReport
    perf: PerfReport

    def total_counts(self) -> dict:
        out = {}
        for c in self.counts:
            for k, v in c.as_dict().items():
                out[k] = out.get(k, 0) + v
        return out


def evaluate(net: NetworkSpec, cfg: ArchConfig, chips: int = 1) -> Evaluation:
    maps = map_network(net, cfg, chips)
    counts = count_network(net, maps, cfg)
    energy = energy_ledger(net, maps, cfg, counts)
    perf = throughput(net, maps, cfg, chips, energy)
    return Evaluation(net, cfg, maps, counts, energy, perf)


@dataclass
class ComparisonReport:
    network: str
    a: str
    b: str
    energy_efficiency_ratio: float
    throughput_ratio: float
    energy_ratio: float
    l1_input_read_ratio: float
    component_delta_j: dict
    level_delta_j: dict
    type_delta_j: dict

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _ratio(x, y) -> float:
    if y == 0:
        return 1.0 if x == 0 else math.inf
    return float(Fraction(x) / Fraction(y))


def compare(a: Evaluation, b: Evaluation) -> ComparisonReport:
    """Ratios of A over B (efficiency, throughput) and B over A (energy, reads)."""
    if a.net != b.net:
        raise ValueError(f"network mismatch: {a.net.name!r} vs {b.net.name!r}")
    ea, eb = a.energy, b.energy
    eff = _ratio(eb.total, ea.total) if ea.total else 1.0
    delta = lambda da, db: {k: float(db[k] - da[k]) for k in da}
    return ComparisonReport(
        network=a.net.name,
        a=a.cfg.name,
        b=b.cfg.name,
        energy_efficiency_ratio=eff,
        throughput_ratio=_ratio(Fraction(a.perf.throughput_ops), Fraction(b.perf.throughput_ops)),
        energy_ratio=_ratio(eb.total, ea.total),
        l1_input_read_ratio=_ratio(b.total_counts()["l1_input_reads"], a.total_counts()["l1_input_reads"]),
        component_delta_j=delta(ea.by_component, eb.by_component),
        level_delta_j=delta(ea.by_level, eb.by_level),
        type_delta_j=delta(ea.by_type, eb.by_type),
    )


FEATURE_ORDER = ("alb", "o2ir", "tdi")
_FEATURE_ON = {
    "o2ir": {"mapping_style": "o2ir"},
    "alb": {"buffer_style": "alb"},
    "tdi": {"interface_style": "time_domain"},
}


def with_features(cfg: ArchConfig, features) -> ArchConfig:
    changes = {}
    for f in features:
        changes.update(_FEATURE_ON[f])
    return cfg.replace(**changes).rebind_counts()


def feature_ablation(net: NetworkSpec, baseline: ArchConfig, chips: int = 1) -> dict:
    """Attribute the energy saving of all three features over `baseline`.

    Features are switched on cumulatively in FEATURE_ORDER, so the increments
    sum to the total saving exactly. Single-feature savings (one feature on) and
    leave-one-out savings (one feature off) are reported alongside.
    """
    base = evaluate(net, baseline, chips).energy.total
    steps, on = [], []
    prev = base
    for f in FEATURE_ORDER:
        on.append(f)
        e = evaluate(net, with_features(baseline, on), chips).energy.total
        steps.append((f, prev - e))
        prev = e
    total = base - prev
    single = {f: float(base - evaluate(net, with_features(baseline, [f]), chips).energy.total)
              for f in FEATURE_ORDER}
    share = {f: float(s / total) if total else 0.0 for f, s in steps}
    loo = {f: evaluate(net, with_features(baseline, [g for g in FEATURE_ORDER if g != f]),
                       chips).energy.total - prev for f in FEATURE_ORDER}
    loo_sum = sum(loo.values(), Fraction(0))
    return {
        "baseline_j": float(base),
        "all_features_j": float(prev),
        "total_saving_j": float(total),
        "incremental_saving_j": {f: float(s) for f, s in steps},
        "incremental_share": share,
        "single_saving_j": single,
        "leave_one_out_saving_j": {f: float(v) for f, v in loo.items()},
        "leave_one_out_share": {f: float(v / loo_sum) if loo_sum else 0.0 for f, v in loo.items()},
        "alb_o2ir_share": share["o2ir"] + share["alb"],
    }
