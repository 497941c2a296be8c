"""Architecture parameters, presets and the static area model.

Field names carry their units (``_fj``, ``_ps``, ``_ns``, ``_um2`` ...) so the
JSON form of a config is self-describing.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

INTERFACE_STYLES = ("time_domain", "voltage_domain")
BUFFER_STYLES = ("alb", "hierarchical")
MAPPING_STYLES = ("o2ir", "naive")
PRESET_NAMES = ("timely_8b", "timely_16b", "prime_like", "isaac_like")
PRESET_DIR_ENV = "TDPIM_PRESET_DIR"

ENERGY_FIELDS = (
    "e_dtc_fj", "e_tdc_fj", "e_dac_fj", "e_adc_fj", "e_x_fj", "e_p_fj",
    "e_r2_read_fj", "e_r2_write_fj", "e_l2_read_fj", "e_l2_write_fj",
    "e_xbar_eval_fj", "e_charge_cmp_fj", "e_iadder_fj", "e_relu_fj",
    "e_maxpool_fj", "e_link_fj",
)
AREA_FIELDS = (
    "a_dtc_um2", "a_tdc_um2", "a_dac_um2", "a_adc_um2", "a_xbar_um2",
    "a_charge_cmp_um2", "a_x_um2", "a_p_um2", "a_iadder_um2", "a_relu_um2",
    "a_maxpool_um2", "a_buf_in_um2", "a_buf_out_um2",
)
TIME_FIELDS = ("t_del_ps", "t_conv_ns", "t_read_ns", "t_analog_ns", "t_write_ns", "clock_mhz")

# component name -> (count field, area field)
AREA_COMPONENTS = {
    "dtc": ("n_dtc", "a_dtc_um2"),
    "tdc": ("n_tdc", "a_tdc_um2"),
    "dac": ("n_dac", "a_dac_um2"),
    "adc": ("n_adc", "a_adc_um2"),
    "xbar": ("n_xbar", "a_xbar_um2"),
    "charge_cmp": ("n_charge_cmp", "a_charge_cmp_um2"),
    "x_buf": ("n_x", "a_x_um2"),
    "p_buf": ("n_p", "a_p_um2"),
    "iadder": ("n_iadder", "a_iadder_um2"),
    "relu": ("n_relu", "a_relu_um2"),
    "maxpool": ("n_maxpool", "a_maxpool_um2"),
    "buf_in": ("n_buf_in", "a_buf_in_um2"),
    "buf_out": ("n_buf_out", "a_buf_out_um2"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArchConfig:
    name: str
    # geometry
    B: int
    R_cb: int
    K_cb: int
    gamma: int
    chi: int
    bits_per_cell: int
    dtc_bits: int
    tdc_bits: int
    input_bits: int
    weight_bits: int
    # timing
    t_del_ps: float
    t_conv_ns: float
    t_read_ns: float
    t_analog_ns: float
    t_write_ns: float
    clock_mhz: float
    cycles_per_mac: int
    # electrical
    r_min_ohm: float
    c_c_ff: float
    v_dd_v: float
    margin_per_step_ps: float
    # unit energies, fJ per event
    e_dtc_fj: float
    e_tdc_fj: float
    e_dac_fj: float
    e_adc_fj: float
    e_x_fj: float
    e_p_fj: float
    e_r2_read_fj: float
    e_r2_write_fj: float
    e_l2_read_fj: float
    e_l2_write_fj: float
    e_xbar_eval_fj: float
    e_charge_cmp_fj: float
    e_iadder_fj: float
    e_relu_fj: float
    e_maxpool_fj: float
    e_link_fj: float
    # unit areas, um^2 per component
    a_dtc_um2: float
    a_tdc_um2: float
    a_dac_um2: float
    a_adc_um2: float
    a_xbar_um2: float
    a_charge_cmp_um2: float
    a_x_um2: float
    a_p_um2: float
    a_iadder_um2: float
    a_relu_um2: float
    a_maxpool_um2: float
    a_buf_in_um2: float
    a_buf_out_um2: float
    # component counts per sub-Chip
    n_dtc: int
    n_tdc: int
    n_dac: int
    n_adc: int
    n_xbar: int
    n_x: int
    n_p: int
    n_charge_cmp: int
    n_iadder: int
    n_relu: int
    n_maxpool: int
    n_buf_in: int
    n_buf_out: int
    # noise
    eps_x_ps: float = 0.0
    eps_cmp_ps: float = 0.0
    max_cascade: int = 12
    # data movement granularity
    l2_read_words: int = 1
    link_word_bits: int = 16
    # style selectors
    interface_style: str = "time_domain"
    buffer_style: str = "alb"
    mapping_style: str = "o2ir"
    cycle_override_ns: Optional[float] = None
    replication_override: Optional[int] = None

    @property
    def cells_per_weight(self) -> int:
        return math.ceil(self.weight_bits / self.bits_per_cell)

    @property
    def rows_per_subchip(self) -> int:
        return self.R_cb * self.B

    @property
    def cols_per_subchip(self) -> int:
        return self.K_cb * self.B

    @property
    def full_scale_ps(self) -> float:
        """Phase length T~ = 2^bits * T_del."""
        return (1 << self.dtc_bits) * self.t_del_ps

    def replace(self, **changes) -> "ArchConfig":
        return dataclasses.replace(self, **changes)

    def rebind_counts(self) -> "ArchConfig":
        """Recompute geometry-bound component counts after a geometry change."""
        R, K, B = self.R_cb, self.K_cb, self.B
        time = self.interface_style == "time_domain"
        alb = self.buffer_style == "alb"
        per_row = B // self.gamma if self.gamma and B % self.gamma == 0 else math.ceil(B / self.gamma)
        return self.replace(
            n_xbar=R * K,
            n_dtc=R * per_row if time else 0,
            n_tdc=K * per_row if time else 0,
            n_dac=0 if time else (R * per_row if alb else R * K * per_row),
            n_adc=0 if time else (K * per_row if alb else R * K * per_row),
            n_x=K * R * B if alb else 0,
            n_p=(R - 1) * K * B if alb else 0,
            n_charge_cmp=K * B if time else 0,
            n_iadder=K * B if alb else 0,
        )


def validate_config(cfg: ArchConfig) -> list[str]:
    """Return a list of violated invariants; empty when the config is consistent."""
    out = []
    for f in ("B", "R_cb", "K_cb", "gamma", "chi", "bits_per_cell", "dtc_bits",
              "tdc_bits", "input_bits", "weight_bits", "cycles_per_mac",
              "max_cascade", "l2_read_words", "link_word_bits"):
        if getattr(cfg, f) < 1:
            out.append(f"{f}: must be >= 1")
    if cfg.gamma >= 1 and cfg.B % cfg.gamma:
        out.append(f"gamma: B mod gamma != 0 (B={cfg.B}, gamma={cfg.gamma})")
    if cfg.dtc_bits != cfg.tdc_bits:
        out.append("dtc_bits: must equal tdc_bits")
    for f in ENERGY_FIELDS:
        if not getattr(cfg, f) > 0:
            out.append(f"{f}: nonpositive energy")
    for f in AREA_FIELDS:
        # I-adders sit under the capacitors and crossbars; their area is counted as 0
        if not getattr(cfg, f) > 0:
            out.append(f"{f}: nonpositive area")
    for f in TIME_FIELDS + ("r_min_ohm", "c_c_ff", "v_dd_v", "margin_per_step_ps"):
        if not getattr(cfg, f) > 0:
            out.append(f"{f}: nonpositive value")
    for f in ("eps_x_ps", "eps_cmp_ps"):
        if getattr(cfg, f) < 0:
            out.append(f"{f}: negative noise std")
    if cfg.cycle_override_ns is not None and not cfg.cycle_override_ns > 0:
        out.append("cycle_override_ns: nonpositive value")
    if cfg.replication_override is not None and cfg.replication_override < 1:
        out.append("replication_override: must be >= 1")
    if cfg.interface_style not in INTERFACE_STYLES:
        out.append(f"interface_style: unknown {cfg.interface_style!r}")
    if cfg.buffer_style not in BUFFER_STYLES:
        out.append(f"buffer_style: unknown {cfg.buffer_style!r}")
    if cfg.mapping_style not in MAPPING_STYLES:
        out.append(f"mapping_style: unknown {cfg.mapping_style!r}")
    if out:
        return out
    bound = cfg.rebind_counts()
    for f in ("n_xbar", "n_dtc", "n_tdc", "n_dac", "n_adc", "n_x", "n_p",
              "n_charge_cmp", "n_iadder"):
        if getattr(cfg, f) != getattr(bound, f):
            out.append(f"{f}: expected {getattr(bound, f)} for this geometry, got {getattr(cfg, f)}")
    for f in ("n_relu", "n_maxpool", "n_buf_in", "n_buf_out"):
        if getattr(cfg, f) < 0:
            out.append(f"{f}: negative count")
    return out


# -- serialization -----------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ArchConfig)}


def config_to_dict(cfg: ArchConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(doc: dict) -> ArchConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    unknown = set(doc) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    required = [
        n for n, f in _FIELDS.items()
        if f.default is dataclasses.MISSING and n not in doc
    ]
    if required:
        raise ConfigError(f"missing config fields: {required}")
    values = {}
    for name, value in doc.items():
        ftype = str(_FIELDS[name].type)
        if name.startswith("_"):
            continue
        if ftype == "int":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name}: expected integer")
        elif ftype == "float":
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{name}: expected number")
            value = float(value)
        elif ftype == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{name}: expected string")
        elif value is not None:
            if ftype == "Optional[float]":
                value = float(value)
            elif not isinstance(value, int):
                raise ConfigError(f"{name}: expected integer or null")
        values[name] = value
    return ArchConfig(**values)


def emit_config(cfg: ArchConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def parse_config(text: str) -> ArchConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if isinstance(doc, dict):
        doc = {k: v for k, v in doc.items() if not k.startswith("_")}
    return config_from_dict(doc)


def load_config(path: str | Path) -> ArchConfig:
    return parse_config(Path(path).read_text())


def preset_dir() -> Path:
    env = os.environ.get(PRESET_DIR_ENV)
    return Path(env) if env else Path(__file__).parent / "presets"


def preset(name: str) -> ArchConfig:
    path = preset_dir() / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"unknown preset {name!r}")
    return load_config(path)


# -- area ----------------------------------------------------------------------

@dataclass(frozen=True)
class AreaReport:
    components_um2: dict
    subchip_area_mm2: float
    chip_area_mm2: float
    crossbar_fraction: float


def area(cfg: ArchConfig) -> AreaReport:
    comps = {}
    for comp, (count_f, area_f) in AREA_COMPONENTS.items():
        unit = 0.0 if comp == "iadder" else getattr(cfg, area_f)
        comps[comp] = getattr(cfg, count_f) * unit
    sub_um2 = math.fsum(comps.values())
    sub_mm2 = sub_um2 * 1e-6
    return AreaReport(
        components_um2=comps,
        subchip_area_mm2=sub_mm2,
        chip_area_mm2=cfg.chi * sub_mm2,
        crossbar_fraction=comps["xbar"] / sub_um2 if sub_um2 else 0.0,
    )


def threshold_voltage(cfg: ArchConfig, n_cb: int) -> float:
    """Comparator threshold V_th = B*N_CB*T~*V_DD / (R_min*C_c), in volts.

    Dividing by C_c makes the value dimensionally a voltage; the charge balance
    in :mod:`tdpim.tdcore` uses it in this form.
    """
    t_full = cfg.full_scale_ps * 1e-12
    return cfg.B * n_cb * t_full * cfg.v_dd_v / (cfg.r_min_ohm * cfg.c_c_ff * 1e-15)
