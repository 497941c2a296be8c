"""Weight placement onto sub-Chip crossbars, input-shift schedules and access counting.

Crossbar row layout for a conv layer with replication R::

    row = (k * H_strip + r*S + i) * G + j        H_strip = Z + (R-1)*S
    col = (r * D + u) * slices + s

so replica r reads the same strip shifted down by r*S input rows, i.e. its
rows start r*S*G below replica 0. All D filters of a replica share its rows.
A pass evaluates R output rows at once; each step moves the window S input
columns to the right by shifting the values already held in the X-subBufs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .archcfg import ArchConfig
from .netspec import LayerSpec, NetworkSpec, layer_stats


class MappingError(ValueError):
    pass


class CapacityError(MappingError):
    pass


@dataclass(frozen=True)
class Tile:
    subchip: int        # index local to the layer
    grid_row: int       # crossbar row within the sub-Chip
    grid_col: int       # crossbar column within the sub-Chip
    row_range: tuple    # half-open, global weight-matrix rows
    col_range: tuple    # half-open, global weight-matrix columns
    filter_ids: tuple
    replica_id: int
    vertical_offset: int
    n_rows: int = 0     # occupied rows inside the bounding box


@dataclass
class LayerMapping:
    layer: LayerSpec
    style: str
    replication: int
    shift_step: int
    slices: int
    rows: int
    cols: int
    B: int
    R_cb: int
    K_cb: int
    tiles: list = field(default_factory=list)
    first_subchip: int = 0

    @property
    def row_blocks(self) -> int:
        return math.ceil(self.rows / self.B)

    @property
    def col_blocks(self) -> int:
        return math.ceil(self.cols / self.B)

    @property
    def row_pieces(self) -> int:
        return math.ceil(self.row_blocks / self.R_cb)

    @property
    def col_pieces(self) -> int:
        return math.ceil(self.col_blocks / self.K_cb)

    @property
    def subchips(self) -> int:
        return self.row_pieces * self.col_pieces

    @property
    def h_strip(self) -> int:
        l = self.layer
        return l.Z + (self.replication - 1) * l.S

    @property
    def passes(self) -> int:
        return math.ceil(self.layer.E / self.replication)

    @property
    def column_pairs(self) -> list:
        """(msb column, lsb column) per weight column, for two-slice splits."""
        if self.slices != 2:
            return []
        return [(c, c + 1) for c in range(0, self.cols, 2)]

    @property
    def occupied_cells(self) -> int:
        l = self.layer
        return self.replication * l.D * self.slices * l.C * l.Z * l.G

    @property
    def utilization(self) -> float:
        total = self.subchips * self.R_cb * self.K_cb * self.B * self.B
        return self.occupied_cells / total

    def piece_row_blocks(self, piece: int) -> int:
        """Vertically aggregated crossbars (N_CB) in a row piece."""
        return min(self.R_cb, self.row_blocks - piece * self.R_cb)

    def piece_col_blocks(self, piece: int) -> int:
        return min(self.K_cb, self.col_blocks - piece * self.K_cb)

    def active_replicas(self, p: int) -> int:
        return min(self.replication, self.layer.E - p * self.replication)

    def macs_per_eval(self) -> int:
        l = self.layer
        return self.replication * l.D * l.C * l.Z * l.G


def row_index(mapping: LayerMapping, k: int, h: int, j: int) -> int:
    return (k * mapping.h_strip + h) * mapping.layer.G + j


def col_index(mapping: LayerMapping, r: int, u: int, s: int) -> int:
    return (r * mapping.layer.D + u) * mapping.slices + s


def _footprint(layer: LayerSpec, cfg: ArchConfig, R: int):
    slices = cfg.cells_per_weight
    rows = layer.C * (layer.Z + (R - 1) * layer.S) * layer.G
    cols = R * layer.D * slices
    rb = math.ceil(rows / cfg.B)
    cb = math.ceil(cols / cfg.B)
    return rows, cols, math.ceil(rb / cfg.R_cb) * math.ceil(cb / cfg.K_cb)


def choose_replication(layer: LayerSpec, cfg: ArchConfig) -> int:
    """Largest R <= E whose footprint stays within the sub-Chips needed at R=1."""
    if cfg.mapping_style == "naive":
        return 1
    if cfg.replication_override is not None:
        return min(cfg.replication_override, layer.E)
    base = _footprint(layer, cfg, 1)[2]
    lo, hi = 1, layer.E
    # footprint is monotone in R, so bisect
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _footprint(layer, cfg, mid)[2] <= base:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _build_tiles(m: LayerMapping) -> list:
    l, B = m.layer, m.B
    rows_per_replica = []
    for r in range(m.replication):
        # replica rows form C runs of Z*G consecutive rows
        runs = [(row_index(m, k, r * l.S, 0), row_index(m, k, r * l.S, 0) + l.Z * l.G)
                for k in range(l.C)]
        rows_per_replica.append(runs)
    tiles = []
    for r, runs in enumerate(rows_per_replica):
        c0 = col_index(m, r, 0, 0)
        c1 = col_index(m, r, l.D - 1, m.slices - 1) + 1
        for gr in range(m.row_blocks):
            lo, hi = gr * B, (gr + 1) * B
            inside = [(max(a, lo), min(b, hi)) for a, b in runs if a < hi and b > lo]
            if not inside:
                continue
            rr = (inside[0][0], inside[-1][1])
            n_rows = sum(b - a for a, b in inside)
            for gc in range(c0 // B, (c1 - 1) // B + 1):
                cc = (max(c0, gc * B), min(c1, (gc + 1) * B))
                u0 = (cc[0] - c0) // m.slices
                u1 = (cc[1] - 1 - c0) // m.slices
                sub = (gr // m.R_cb) * m.col_pieces + gc // m.K_cb
                tiles.append(Tile(
                    subchip=sub, grid_row=gr % m.R_cb, grid_col=gc % m.K_cb,
                    row_range=rr, col_range=cc, filter_ids=tuple(range(u0, u1 + 1)),
                    replica_id=r, vertical_offset=r * l.S * l.G, n_rows=n_rows,
                ))
    return tiles


def map_layer(layer: LayerSpec, cfg: ArchConfig, chips: int = 1) -> LayerMapping:
    if not layer.has_weights:
        raise MappingError(f"layer {layer.name!r}: {layer.kind} layers hold no weights")
    slices = cfg.cells_per_weight
    if cfg.B % slices:
        raise MappingError(
            f"layer {layer.name!r}: infeasible pairing, {cfg.B} columns per crossbar "
            f"cannot hold {slices}-column weight groups"
        )
    R = choose_replication(layer, cfg)
    rows, cols, need = _footprint(layer, cfg, R)
    avail = chips * cfg.chi
    if need > avail:
        raise CapacityError(
            f"layer {layer.name!r} needs {need} sub-Chips, only {avail} available"
        )
    m = LayerMapping(
        layer=layer, style=cfg.mapping_style, replication=R, shift_step=layer.S,
        slices=slices, rows=rows, cols=cols, B=cfg.B, R_cb=cfg.R_cb, K_cb=cfg.K_cb,
    )
    if max(m.piece_col_blocks(p) for p in range(m.col_pieces)) > cfg.max_cascade:
        raise MappingError(
            f"layer {layer.name!r}: hop count overflow, inputs cross "
            f"{m.piece_col_blocks(0)} X-subBufs, max_cascade is {cfg.max_cascade}"
        )
    m.tiles = _build_tiles(m)
    return m


def map_network(net: NetworkSpec, cfg: ArchConfig, chips: int = 1) -> list:
    """Map every weight layer; pooling layers get None. Sub-Chips are assigned in order."""
    avail = chips * cfg.chi
    used = 0
    out = []
    for layer in net.layers:
        if not layer.has_weights:
            out.append(None)
            continue
        m = map_layer(layer, cfg, chips)
        if used + m.subchips > avail:
            raise CapacityError(
                f"layer {layer.name!r} does not fit: needs {m.subchips} sub-Chips, "
                f"{avail - used} of {avail} left ({chips} chip(s) x {cfg.chi})"
            )
        m.first_subchip = used
        used += m.subchips
        out.append(m)
    return out


def validate_mapping(m: LayerMapping, layer: LayerSpec, cfg: ArchConfig, chips: int = 1) -> list:
    out = []
    if m.layer != layer:
        out.append("mapping belongs to a different layer")
    if m.shift_step != layer.S:
        out.append(f"shift step {m.shift_step} != S={layer.S}")
    if cfg.B % m.slices:
        out.append("pairing: crossbar width not a multiple of the column group")
    by_xbar = {}
    for t in m.tiles:
        if t.vertical_offset != t.replica_id * layer.S * layer.G:
            out.append(
                f"offset rule violated: replica {t.replica_id} offset {t.vertical_offset}, "
                f"expected {t.replica_id * layer.S * layer.G}"
            )
        if t.col_range[0] % m.slices or t.col_range[1] % m.slices:
            out.append(f"pairing split in columns {t.col_range}")
        for a, b, lim in ((t.row_range[0], t.row_range[1], cfg.B), (t.col_range[0], t.col_range[1], cfg.B)):
            if a // lim != (b - 1) // lim:
                out.append(f"tile crosses a crossbar boundary: {t}")
        key = (t.subchip, t.grid_row, t.grid_col)
        for o in by_xbar.get(key, []):
            if (t.row_range[0] < o.row_range[1] and o.row_range[0] < t.row_range[1]
                    and t.col_range[0] < o.col_range[1] and o.col_range[0] < t.col_range[1]):
                out.append(f"overlap at (subchip {key[0]}, crossbar ({key[1]},{key[2]}))")
        by_xbar.setdefault(key, []).append(t)
    for p in range(m.col_pieces):
        if m.piece_col_blocks(p) > cfg.max_cascade:
            out.append(f"hop bound: {m.piece_col_blocks(p)} > max_cascade {cfg.max_cascade}")
    if m.first_subchip + m.subchips > chips * cfg.chi:
        out.append(
            f"capacity: needs sub-Chips up to {m.first_subchip + m.subchips}, "
            f"{chips * cfg.chi} available"
        )
    if not 0 < m.utilization <= 1:
        out.append(f"utilization {m.utilization} outside (0, 1]")
    return out


# -- input schedule -----------------------------------------------------------

@dataclass(frozen=True)
class ScheduleEntry:
    pass_id: int
    step: int
    coord: tuple        # (m, k, h, w) in unpadded input coordinates
    row: int
    hops: int
    source: str         # l1 | shift | retained


def _axis_members(extent: int, pad: int, size: int, stride: int, starts) -> list:
    """Real (unpadded) coordinates touched by windows starting at the given indices."""
    seen = set()
    for s in starts:
        for i in range(size):
            c = s * stride + i - pad
            if 0 <= c < extent:
                seen.add(c)
    return sorted(seen)


def input_schedule(m: LayerMapping, layer: LayerSpec, M: int = 1) -> list:
    """Enumerate every input delivery. Sized for small layers; counts use closed forms."""
    if m.style != "o2ir":
        raise MappingError("input schedules are defined for o2ir mappings only")
    l = layer
    hops = m.piece_col_blocks(0)
    out = []
    for b in range(M):
        seen = set()
        for p in range(m.passes):
            y0 = p * m.replication
            ra = m.active_replicas(p)
            prev = set()
            for x in range(l.F):
                cur = set()
                for k in range(l.C):
                    for hs in range((ra - 1) * l.S + l.Z):
                        h = y0 * l.S + hs - l.P
                        if not 0 <= h < l.H:
                            continue
                        if not any(0 <= hs - r * l.S < l.Z for r in range(ra)):
                            continue
                        for j in range(l.G):
                            w = x * l.S + j - l.P
                            if not 0 <= w < l.W:
                                continue
                            c = (b, k, h, w)
                            cur.add(c)
                            if c in prev:
                                src = "shift"
                            elif c in seen:
                                src = "retained"
                            else:
                                src = "l1"
                            out.append(ScheduleEntry(p, x, c, row_index(m, k, hs, j), hops, src))
                prev = cur
                seen |= cur
    return out


@dataclass(frozen=True)
class ScheduleCounts:
    l1: int
    shift: int
    retained: int


def schedule_counts(m: LayerMapping, layer: LayerSpec, M: int = 1) -> ScheduleCounts:
    """Closed-form totals of input_schedule by source."""
    l = layer
    if m.style == "naive":
        # every window element is fetched, border effects ignored
        return ScheduleCounts(naive_l1_reads(l, M), 0, 0)
    col_distinct = len(_axis_members(l.W, l.P, l.G, l.S, range(l.F)))
    col_entries = sum(len(_axis_members(l.W, l.P, l.G, l.S, [x])) for x in range(l.F))
    union = set()
    row_sum = 0
    for p in range(m.passes):
        y0 = p * m.replication
        rows = _axis_members(l.H, l.P, l.Z, l.S, range(y0, y0 + m.active_replicas(p)))
        row_sum += len(rows)
        union.update(rows)
    return ScheduleCounts(
        l1=M * l.C * len(union) * col_distinct,
        shift=M * l.C * row_sum * (col_entries - col_distinct),
        retained=M * l.C * (row_sum - len(union)) * col_distinct,
    )


# -- access counting ------------------------------------------------------------

@dataclass(frozen=True)
class AccessCounts:
    l1_input_reads: int = 0
    l1_input_refetches: int = 0
    dtc_conversions: int = 0
    dac_conversions: int = 0
    x_hops: int = 0
    p_hops: int = 0
    xbar_evals: int = 0
    iadder_ops: int = 0
    charge_cmp_ops: int = 0
    tdc_conversions: int = 0
    adc_conversions: int = 0
    l1_psum_reads: int = 0
    l1_psum_writes: int = 0
    l1_output_writes: int = 0
    l2_reads: int = 0
    l2_writes: int = 0
    link_transfers: int = 0
    relu_ops: int = 0
    maxpool_ops: int = 0

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def naive_l1_reads(layer: LayerSpec, M: int = 1) -> int:
    return math.ceil(M * layer.C * layer.H * layer.W * layer.Z * layer.G / layer.S ** 2)


def o2ir_l1_reads(layer: LayerSpec, M: int = 1) -> int:
    return M * layer.C * layer.H * layer.W


def _tile_activity(m: LayerMapping, M: int) -> dict:
    """Per-evaluation activity summed over all evaluations of the layer.

    xbars: crossbars holding an active replica; cols: tile columns, i.e. one
    conversion per column per crossbar; rows: tile rows, i.e. one input
    delivery per row per crossbar; piece_cols: replica columns times the row
    pieces the replica touches.
    """
    per_r = {}
    for t in m.tiles:
        d = per_r.setdefault(t.replica_id, {"cols": 0, "rows": 0, "pieces": set(), "xb": set()})
        d["cols"] += t.col_range[1] - t.col_range[0]
        d["rows"] += t.n_rows
        d["pieces"].add(t.subchip // m.col_pieces)
        d["xb"].add((t.subchip, t.grid_row, t.grid_col))
    width = m.layer.D * m.slices
    out = {"xbars": 0, "cols": 0, "rows": 0, "piece_cols": 0}
    for p in range(m.passes):
        active = [per_r[r] for r in range(m.active_replicas(p))]
        out["xbars"] += len(set().union(*(d["xb"] for d in active)))
        out["cols"] += sum(d["cols"] for d in active)
        out["rows"] += sum(d["rows"] for d in active)
        out["piece_cols"] += sum(width * len(d["pieces"]) for d in active)
    scale = m.layer.F * M
    return {k: v * scale for k, v in out.items()}


def count_accesses(
    m: LayerMapping | None,
    layer: LayerSpec,
    cfg: ArchConfig,
    M: int = 1,
    relu: bool = True,
    next_on_other_chip: bool = False,
) -> AccessCounts:
    stats = layer_stats(layer, M)
    words_in = math.ceil(layer.input_bits / 8)
    link = 0
    if next_on_other_chip:
        link = math.ceil(stats.output_count * layer.input_bits / cfg.link_word_bits)
    if m is None:
        # pooling runs in the digital units of the producing sub-Chip
        return AccessCounts(maxpool_ops=stats.output_count, link_transfers=link)

    time = cfg.interface_style == "time_domain"
    alb = cfg.buffer_style == "alb"
    sc = schedule_counts(m, layer, M)
    reads = sc.l1 * words_in
    moves = sc.shift + sc.retained
    outputs = stats.output_count
    col_evals = m.slices * outputs  # active columns summed over evaluations

    act = _tile_activity(m, M)
    if alb:
        refetch = reads * (m.col_pieces - 1)
        span = sum(m.piece_col_blocks(p) - 1 for p in range(m.col_pieces))
        x_hops = (sc.l1 + moves) * span + moves * m.col_pieces
        p_hops = sum(m.piece_row_blocks(p) - 1 for p in range(m.row_pieces)) * col_evals
        conversions = act["piece_cols"]
        psum_w = psum_r = conversions - col_evals
        iadder = conversions
        out_l1, out_l2 = outputs * words_in, 0
        l2_reads = 0
    else:
        # no analog buffering: every crossbar row gets its own delivery per evaluation
        refetch = max(act["rows"] * words_in - reads, 0)
        x_hops = 0
        p_hops = 0
        conversions = act["cols"]
        psum_w = psum_r = conversions - col_evals
        iadder = 0
        out_l1, out_l2 = 0, outputs * words_in
        l2_reads = math.ceil(stats.input_count * words_in / cfg.l2_read_words)
    dac_like = reads + refetch
    return AccessCounts(
        l1_input_reads=reads,
        l1_input_refetches=refetch,
        dtc_conversions=dac_like if time else 0,
        dac_conversions=0 if time else dac_like,
        x_hops=x_hops,
        p_hops=p_hops,
        xbar_evals=act["xbars"],
        iadder_ops=iadder,
        charge_cmp_ops=conversions if time else 0,
        tdc_conversions=conversions if time else 0,
        adc_conversions=0 if time else conversions,
        l1_psum_reads=psum_r,
        l1_psum_writes=psum_w,
        l1_output_writes=out_l1,
        l2_reads=l2_reads,
        l2_writes=out_l2,
        link_transfers=link,
        relu_ops=outputs if relu else 0,
    )


def chip_of(m: LayerMapping, cfg: ArchConfig, last: bool = False) -> int:
    idx = m.first_subchip + (m.subchips - 1 if last else 0)
    return idx // cfg.chi


def count_network(net: NetworkSpec, mappings: list, cfg: ArchConfig) -> list:
    """Per-layer AccessCounts; ReLU follows every weight layer except the last one.

    A pooling layer runs on the sub-Chip that produced its input, so outputs
    cross a chip boundary only when the next weight layer starts on another chip.
    """
    weight_idx = [i for i, l in enumerate(net.layers) if l.has_weights]
    last_w = weight_idx[-1] if weight_idx else -1
    owner, cur = [], None
    for m in mappings:
        cur = m if m is not None else cur
        owner.append(cur)
    out = []
    for i, (layer, m) in enumerate(zip(net.layers, mappings)):
        other = False
        if i + 1 < len(mappings) and mappings[i + 1] is not None and owner[i] is not None:
            other = chip_of(owner[i], cfg, last=True) != chip_of(mappings[i + 1], cfg)
        out.append(count_accesses(m, layer, cfg, net.batch, relu=i != last_w,
                                  next_on_other_chip=other))
    return out


# -- export ------------------------------------------------------------------------

def mapping_to_dict(m: LayerMapping) -> dict:
    return {
        "layer": m.layer.name,
        "style": m.style,
        "replication": m.replication,
        "shift_step": m.shift_step,
        "slices": m.slices,
        "rows": m.rows,
        "cols": m.cols,
        "subchips": m.subchips,
        "first_subchip": m.first_subchip,
        "utilization": m.utilization,
        "tiles": [
            {
                "subchip": t.subchip, "grid_row": t.grid_row, "grid_col": t.grid_col,
                "row_range": list(t.row_range), "col_range": list(t.col_range),
                "filter_ids": [t.filter_ids[0], t.filter_ids[-1]],
                "replica_id": t.replica_id, "vertical_offset": t.vertical_offset,
            }
            for t in m.tiles
        ],
    }


def mapping_commands(m: LayerMapping) -> list:
    """Compiler-style commands: weight writes per crossbar and the input path setup."""
    cmds = []
    for t in m.tiles:
        sc = m.first_subchip + t.subchip
        cmds.append(
            f"WRITE_WEIGHTS sc={sc} xbar=({t.grid_row},{t.grid_col}) "
            f"rows={t.row_range[0] % m.B}:{(t.row_range[1] - 1) % m.B + 1} "
            f"cols={t.col_range[0] % m.B}:{(t.col_range[1] - 1) % m.B + 1} "
            f"filters={t.filter_ids[0]}..{t.filter_ids[-1]} replica={t.replica_id}"
        )
    for p in range(m.col_pieces):
        cmds.append(
            f"CONFIG_INPUT_PATH sc={m.first_subchip + p} shift={m.shift_step} "
            f"cascade={m.piece_col_blocks(p)} passes={m.passes} steps={m.layer.F}"
        )
    return cmds


def emit_mappings(mappings: list) -> str:
    docs = [mapping_to_dict(m) for m in mappings if m is not None]
    return json.dumps({"version": 1, "layers": docs}, indent=1, sort_keys=True) + "\n"
