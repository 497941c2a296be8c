"""Bit-accurate model of the time-domain compute path.

Inputs become delays through a DTC, cells gate charging currents in proportion
to their conductance, and the column charge is read back as a delay and
digitized. Everything is normalized so that a column fed full-scale inputs at
g = 1 on every row reaches the DTC full scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .archcfg import ArchConfig
from .netspec import LayerSpec
from .o2ir import LayerMapping, col_index, row_index

ROLES = (None, "msb", "mid", "lsb")


class TimeDomainError(ValueError):
    pass


@dataclass(frozen=True)
class TimeCode:
    code: int
    bits: int
    role: Optional[str] = None

    def __post_init__(self):
        if not 0 <= self.code < (1 << self.bits):
            raise TimeDomainError(f"code {self.code} outside [0, 2^{self.bits})")
        if self.role not in ROLES:
            raise TimeDomainError(f"unknown column role {self.role!r}")


@dataclass(frozen=True)
class TimeSample:
    delay: float  # ps

    def __post_init__(self):
        if not self.delay >= 0:
            raise TimeDomainError(f"negative delay {self.delay}")


@dataclass(frozen=True)
class ConductanceMatrix:
    levels: np.ndarray      # integer cell levels, one slice per leading index
    bits_per_cell: int
    column_role: tuple

    @property
    def g(self) -> np.ndarray:
        return self.levels / ((1 << self.bits_per_cell) - 1)


@dataclass(frozen=True)
class NoiseModel:
    eps_x: float = 0.0
    eps_cmp: float = 0.0
    seed: int = 0
    enabled: bool = False

    def __post_init__(self):
        if self.eps_x < 0 or self.eps_cmp < 0:
            raise TimeDomainError("noise stds must be >= 0")

    @classmethod
    def from_config(cls, cfg: ArchConfig, seed: int = 0, enabled: bool = True) -> "NoiseModel":
        return cls(eps_x=cfg.eps_x_ps, eps_cmp=cfg.eps_cmp_ps, seed=seed, enabled=enabled)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based stream keyed on (seed, *key); independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# -- converters -----------------------------------------------------------------

def dtc_convert(code: TimeCode, cfg: ArchConfig) -> TimeSample:
    if code.bits != cfg.dtc_bits:
        raise TimeDomainError(f"bit-width mismatch: code has {code.bits}, DTC has {cfg.dtc_bits}")
    return TimeSample(code.code * cfg.t_del_ps)


def tdc_convert(t: TimeSample, cfg: ArchConfig) -> TimeCode:
    top = (1 << cfg.tdc_bits) - 1
    code = int(round_half_away(t.delay / cfg.t_del_ps))
    return TimeCode(min(max(code, 0), top), cfg.tdc_bits)


def column_dot_product(times: Sequence, g_col: Sequence, cfg: ArchConfig) -> TimeSample:
    """T_o = sum(t_i * g_i) / (B * N_CB); the length of `times` fixes B * N_CB."""
    t = np.array([s.delay if isinstance(s, TimeSample) else s for s in times], dtype=float)
    g = np.asarray(g_col, dtype=float)
    if t.shape != g.shape:
        raise TimeDomainError(f"length mismatch: {t.size} times, {g.size} conductances")
    if t.size == 0 or t.size % cfg.B:
        raise TimeDomainError(f"column length {t.size} is not a multiple of B={cfg.B}")
    _check_quantized(g, cfg.bits_per_cell)
    return TimeSample(float(t @ g) / t.size)


def _check_quantized(g: np.ndarray, bpc: int):
    top = (1 << bpc) - 1
    lv = g * top
    if np.any(g < 0) or np.any(g > 1) or not np.allclose(lv, np.round(lv), rtol=0, atol=1e-9):
        raise TimeDomainError(f"conductance not quantized to {bpc}-bit levels")


def charge_phase2_time(t_o: TimeSample | float, cfg: ArchConfig, n_cb: int = 1) -> tuple:
    """Solve the second charging phase; returns (T_x, output time) as TimeSamples.

    Phase I deposits Q1 = V_DD/R_min * sum(t_i g_i) = V_DD/R_min * B*N_CB*T_o.
    Phase II tops up with I_c = B*N_CB*V_DD/R_min until the capacitor holds
    C_c*V_th = B*N_CB*T~*V_DD/R_min, so T_x = T~ - T_o.
    """
    t = t_o.delay if isinstance(t_o, TimeSample) else float(t_o)
    bn = cfg.B * n_cb
    full = cfg.full_scale_ps * 1e-12
    q1 = cfg.v_dd_v / cfg.r_min_ohm * bn * t * 1e-12
    i_c = bn * cfg.v_dd_v / cfg.r_min_ohm
    q_th = bn * full * cfg.v_dd_v / cfg.r_min_ohm
    if t < 0 or q1 > q_th * (1 + 1e-12):
        raise TimeDomainError(
            f"phase-I value {t} ps outside [0, {cfg.full_scale_ps}] ps; comparator cannot trip"
        )
    t_x = max((q_th - q1) / i_c, 0.0) * 1e12
    return TimeSample(t_x), TimeSample(max(cfg.full_scale_ps - t_x, 0.0))


def subrange_combine(msb: TimeCode, lsb: TimeCode, cfg: ArchConfig) -> int:
    if msb.role not in (None, "msb") or lsb.role not in (None, "lsb"):
        raise TimeDomainError(f"mismatched pairing: roles ({msb.role}, {lsb.role})")
    if msb.bits != lsb.bits:
        raise TimeDomainError("mismatched pairing: codes have different widths")
    return (msb.code << cfg.bits_per_cell) + lsb.code


# -- noise -----------------------------------------------------------------------

def inject_noise(t: TimeSample, hops: int, noise: NoiseModel, cfg: ArchConfig,
                 key: Sequence[int] = (), column: bool = True) -> TimeSample:
    if hops > cfg.max_cascade:
        raise TimeDomainError(f"{hops} hops exceeds max_cascade={cfg.max_cascade}")
    if not noise.enabled:
        return t
    rng = rng_for(noise.seed, *key)
    std = math.sqrt(hops) * noise.eps_x
    d = t.delay + rng.normal(0.0, std) if std else t.delay
    if column and noise.eps_cmp:
        d += rng.normal(0.0, noise.eps_cmp)
    return TimeSample(max(d, 0.0))


@dataclass(frozen=True)
class MarginReport:
    budget_ps: float
    used_ps: float
    passed: bool


def margin_check(noise: NoiseModel, cfg: ArchConfig, confidence: float = 1.0) -> MarginReport:
    """Accumulated cascade error against half the design margin (strictly less)."""
    used = math.sqrt(cfg.max_cascade) * noise.eps_x * confidence
    budget = cfg.margin_per_step_ps * (1 << cfg.dtc_bits)
    half = budget / 2
    passed = used < half and not math.isclose(used, half, rel_tol=1e-9)
    return MarginReport(budget_ps=budget, used_ps=used, passed=passed)


# -- weights -----------------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedWeights:
    codes: np.ndarray          # signed integer codes, shape (D, C, Z, G)
    scale: float
    pos: ConductanceMatrix     # levels shape (slices, D, C, Z, G)
    neg: ConductanceMatrix

    def dequantize(self) -> np.ndarray:
        return self.codes * self.scale


def _roles(n: int) -> tuple:
    if n == 1:
        return (None,)
    return ("msb",) + ("mid",) * (n - 2) + ("lsb",)


def split_slices(codes: np.ndarray, bpc: int, slices: int) -> np.ndarray:
    """Unsigned codes -> cell levels, most significant slice first."""
    mask = (1 << bpc) - 1
    return np.stack([(codes >> (bpc * (slices - 1 - s))) & mask for s in range(slices)])


def quantize_weights(weights, layer: LayerSpec, cfg: ArchConfig) -> QuantizedWeights:
    w = np.asarray(weights, dtype=float).reshape(layer.D, layer.C, layer.Z, layer.G)
    if not np.all(np.isfinite(w)):
        raise TimeDomainError("weights must be finite")
    top = (1 << layer.weight_bits) - 1
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = peak / top if peak > 0 else 1.0
    codes = round_half_away(w / scale).astype(np.int64)
    codes = np.clip(codes, -top, top)
    return planes_from_codes(codes, scale, cfg)


def planes_from_codes(codes: np.ndarray, scale: float, cfg: ArchConfig) -> QuantizedWeights:
    codes = np.asarray(codes, dtype=np.int64)
    slices = cfg.cells_per_weight
    roles = _roles(slices)
    bpc = cfg.bits_per_cell
    pos = ConductanceMatrix(split_slices(np.maximum(codes, 0), bpc, slices), bpc, roles)
    neg = ConductanceMatrix(split_slices(np.maximum(-codes, 0), bpc, slices), bpc, roles)
    return QuantizedWeights(codes=codes, scale=scale, pos=pos, neg=neg)


# -- layer simulation ------------------------------------------------------------

def integer_reference(inputs: np.ndarray, codes: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Exact integer conv/fc: out[m,u,y,x] = sum inputs[m,k,yS+i-P,xS+j-P] * w[u,k,i,j]."""
    x = _as_nchw(inputs, layer)
    xp = np.pad(x, ((0, 0), (0, 0), (layer.P, layer.P), (layer.P, layer.P)))
    cols = _im2col(xp, layer)  # (M, E, F, C*Z*G)
    w = np.asarray(codes, dtype=np.int64).reshape(layer.D, -1)
    return np.einsum("mefr,dr->mdef", cols, w)


def _as_nchw(inputs, layer: LayerSpec) -> np.ndarray:
    x = np.asarray(inputs)
    if not np.issubdtype(x.dtype, np.integer):
        raise TimeDomainError("inputs must be integer codes")
    per = layer.C * layer.H * layer.W
    if x.ndim == 3:
        x = x[None]
    elif x.ndim == 1 or (x.ndim == 2 and x.shape[-1] == per):
        x = x.reshape(-1, per)
    if x.ndim == 2:
        x = x.reshape(-1, layer.C, layer.H, layer.W)
    if x.shape[1:] != (layer.C, layer.H, layer.W):
        raise TimeDomainError(
            f"input shape {tuple(x.shape)} does not match layer {layer.name!r} "
            f"(C,H,W)=({layer.C},{layer.H},{layer.W})"
        )
    top = (1 << layer.input_bits) - 1
    if x.size and (x.min() < 0 or x.max() > top):
        raise TimeDomainError(f"inputs outside [0, {top}]")
    return x.astype(np.int64)


def _im2col(xp: np.ndarray, layer: LayerSpec) -> np.ndarray:
    v = np.lib.stride_tricks.sliding_window_view(xp, (layer.Z, layer.G), axis=(2, 3))
    v = v[:, :, :: layer.S, :: layer.S][:, :, : layer.E, : layer.F]
    # (M, C, E, F, Z, G) -> (M, E, F, C*Z*G)
    return v.transpose(0, 2, 3, 1, 4, 5).reshape(xp.shape[0], layer.E, layer.F, -1)


def crossbar_matrix(plane: ConductanceMatrix, m: LayerMapping) -> np.ndarray:
    """Cell levels laid out on the mapping's (rows, cols) weight matrix."""
    l = m.layer
    mat = np.zeros((m.rows, m.cols), dtype=np.int64)
    lv = plane.levels  # (slices, D, C, Z, G)
    k, i, j = np.meshgrid(np.arange(l.C), np.arange(l.Z), np.arange(l.G), indexing="ij")
    for r in range(m.replication):
        rows = row_index(m, k, r * l.S + i, j).ravel()
        for s in range(m.slices):
            cols = col_index(m, r, np.arange(l.D), s)
            mat[np.ix_(rows, cols)] = lv[s].reshape(l.D, -1).T
    return mat


def _strip_vectors(x: np.ndarray, m: LayerMapping) -> np.ndarray:
    """Input codes presented to the crossbar rows: (M, passes, F, rows)."""
    l = m.layer
    xp = np.pad(x, ((0, 0), (0, 0), (l.P, l.P), (l.P, l.P)))
    hs = m.h_strip
    extra = m.passes * m.replication * l.S + hs
    xp = np.pad(xp, ((0, 0), (0, 0), (0, max(0, extra - xp.shape[2])), (0, 0)))
    out = np.zeros((x.shape[0], m.passes, l.F, m.rows), dtype=np.int64)
    for p in range(m.passes):
        top = p * m.replication * l.S
        strip = xp[:, :, top: top + hs, :]  # (M, C, hs, Wp)
        win = np.lib.stride_tricks.sliding_window_view(strip, l.G, axis=3)[:, :, :, :: l.S][:, :, :, : l.F]
        # (M, C, hs, F, G) -> (M, F, C, hs, G)
        out[:, p] = win.transpose(0, 3, 1, 2, 4).reshape(x.shape[0], l.F, -1)
    return out


def simulate_layer(
    inputs,
    weights: QuantizedWeights,
    m: LayerMapping,
    cfg: ArchConfig,
    noise: NoiseModel | None = None,
    relu: bool = False,
    layer_key: int = 0,
) -> np.ndarray:
    """Run one layer through DTC, X-subBuf hops, crossbar columns, I-adder and TDC.

    Returns signed integer psums shaped (M, D, E, F), rectified when `relu`.
    Noise enters each input delay once per X-subBuf it crosses and once at the
    comparator; with noise disabled the result equals the integer reference.
    """
    l = m.layer
    x = _as_nchw(inputs, l)
    if weights.codes.shape != (l.D, l.C, l.Z, l.G):
        raise TimeDomainError(
            f"weight shape {weights.codes.shape} does not match layer {l.name!r}"
        )
    noisy = noise is not None and noise.enabled and (noise.eps_x > 0 or noise.eps_cmp > 0)
    M = x.shape[0]
    v = _strip_vectors(x, m).reshape(-1, m.rows)       # (evals, rows)
    times = v * cfg.t_del_ps
    bpc_top = (1 << cfg.bits_per_cell) - 1
    in_top = (1 << l.input_bits) - 1
    psum = np.zeros((2, v.shape[0], m.cols), dtype=np.int64)
    B = cfg.B
    for pi, plane in enumerate((weights.pos, weights.neg)):
        mat = crossbar_matrix(plane, m)
        g = mat / bpc_top
        for piece in range(m.row_pieces):
            n_cb = m.piece_row_blocks(piece)
            r0 = piece * m.R_cb * B
            r1 = min(r0 + n_cb * B, m.rows)
            t_piece = times[:, r0:r1]
            lsb = cfg.t_del_ps / (B * n_cb * bpc_top)
            code_top = B * n_cb * bpc_top * in_top
            for cp in range(m.col_pieces):
                for gc in range(m.piece_col_blocks(cp)):
                    c_lo = (cp * m.K_cb + gc) * B
                    c_hi = min(c_lo + B, m.cols)
                    g_blk = g[r0:r1, c_lo:c_hi]
                    if noisy:
                        t_in = _hop_noise(t_piece, gc + 1, noise, cfg,
                                          (layer_key, piece, cp), M)
                    else:
                        t_in = t_piece
                    t_o = t_in @ g_blk / (B * n_cb)
                    if not noisy and np.any(t_o > cfg.full_scale_ps):
                        raise TimeDomainError("column output exceeds full scale")
                    if noisy and noise.eps_cmp:
                        rng = rng_for(noise.seed, 1, layer_key, pi, piece, cp, gc)
                        t_o = np.maximum(t_o + rng.normal(0.0, noise.eps_cmp, t_o.shape), 0.0)
                    code = np.clip(round_half_away(t_o / lsb), 0, code_top).astype(np.int64)
                    psum[pi, :, c_lo:c_hi] += code
    signed = psum[0] - psum[1]
    # shift-and-add across slices, MSB first
    w = np.array([1 << (cfg.bits_per_cell * (m.slices - 1 - s)) for s in range(m.slices)])
    per_col = signed.reshape(v.shape[0], m.replication, l.D, m.slices) @ w
    per_col = per_col.reshape(M, m.passes, l.F, m.replication, l.D)
    # (M, passes, F, R, D) -> (M, D, passes*R, F), keep the E real rows
    out = per_col.transpose(0, 4, 1, 3, 2).reshape(M, l.D, m.passes * m.replication, l.F)
    out = out[:, :, : l.E, :]
    if relu:
        out = np.maximum(out, 0)
    return out


def _hop_noise(t: np.ndarray, hops: int, noise: NoiseModel, cfg: ArchConfig,
               key: tuple, M: int) -> np.ndarray:
    """Inputs after `hops` X-subBufs: each hop adds an independent N(0, eps_x) error.

    Draws are keyed on (layer, piece, column piece, sample, hop) so both weight
    planes and every crossbar column see the same cumulative error of a stream.
    """
    if hops > cfg.max_cascade:
        raise TimeDomainError(f"{hops} hops exceeds max_cascade={cfg.max_cascade}")
    if noise.eps_x == 0:
        return t
    per = t.shape[0] // M
    out = np.empty_like(t)
    for b in range(M):
        acc = np.zeros((per, t.shape[1]))
        for h in range(hops):
            acc += rng_for(noise.seed, 0, *key, b, h).normal(0.0, noise.eps_x, acc.shape)
        out[b * per:(b + 1) * per] = np.maximum(t[b * per:(b + 1) * per] + acc, 0.0)
    return out


def maxpool(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    x = _as_nchw(x, layer) if x.ndim != 4 else x
    xp = np.pad(x, ((0, 0), (0, 0), (layer.P, layer.P), (layer.P, layer.P)))
    v = np.lib.stride_tricks.sliding_window_view(xp, (layer.Z, layer.G), axis=(2, 3))
    v = v[:, :, :: layer.S, :: layer.S][:, :, : layer.E, : layer.F]
    return v.max(axis=(4, 5))


def requantize(psum: np.ndarray, shift: int, bits: int = 8) -> np.ndarray:
    """Arithmetic right shift with round-half-up, clamped to the unsigned input range."""
    top = (1 << bits) - 1
    if shift > 0:
        psum = (psum + (1 << (shift - 1))) >> shift
    return np.clip(psum, 0, top).astype(np.int64)


# -- whole networks ----------------------------------------------------------------

def run_network(net, inputs, weights: list, mappings: list, cfg: ArchConfig,
                noise: NoiseModel | None = None, shifts: Sequence[int] | None = None,
                reference: bool = False) -> np.ndarray:
    """Chain layers; hidden psums are rectified and requantized by `shifts[i]`.

    With `reference=True` the exact integer path runs instead of the simulator.
    Returns the last layer's signed psums.
    """
    weight_idx = [i for i, l in enumerate(net.layers) if l.has_weights]
    last = weight_idx[-1] if weight_idx else -1
    x = np.asarray(inputs)
    for i, layer in enumerate(net.layers):
        if not layer.has_weights:
            x = maxpool(x, layer)
            continue
        q = weights[i]
        final = i == last
        if reference:
            y = integer_reference(x, q.codes, layer)
            y = y if final else np.maximum(y, 0)
        else:
            y = simulate_layer(x, q, mappings[i], cfg, noise, relu=not final, layer_key=i)
        if final:
            return y
        nxt = next((l for l in net.layers[i + 1:] if l.has_weights), layer)
        x = requantize(y, shifts[i] if shifts is not None else 0, nxt.input_bits)
        x = x.reshape(x.shape[0], -1) if nxt.kind == "fc" else x
    return x
