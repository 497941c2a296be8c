"""Deterministic JSON/CSV emission of evaluations, comparisons and plot series."""

from __future__ import annotations

import csv
import io
import json

from .archcfg import area, config_to_dict
from .perfmodel import (
    ASSUMPTIONS, ComparisonReport, Evaluation, interface_reduction, per_input_energy,
)

SCHEMA_VERSION = 1


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def evaluation_to_dict(ev: Evaluation) -> dict:
    a = area(ev.cfg)
    layers = []
    for layer, m, c in zip(ev.net.layers, ev.mappings, ev.counts):
        layers.append({
            "layer": layer.name,
            "kind": layer.kind,
            "replication": m.replication if m else 0,
            "subchips": m.subchips if m else 0,
            "utilization": m.utilization if m else 0.0,
            "counts": c.as_dict(),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "network": ev.net.name,
        "config": ev.cfg.name,
        "styles": {
            "interface": ev.cfg.interface_style,
            "buffers": ev.cfg.buffer_style,
            "mapping": ev.cfg.mapping_style,
        },
        "energy": ev.energy.as_dict(),
        "perf": ev.perf.as_dict(),
        "area": {
            "components_um2": a.components_um2,
            "subchip_area_mm2": a.subchip_area_mm2,
            "chip_area_mm2": a.chip_area_mm2,
            "crossbar_fraction": a.crossbar_fraction,
        },
        "analytical": {
            "per_input_energy": per_input_energy(ev.cfg),
            "interface_reduction": interface_reduction(ev.cfg),
        },
        "layers": layers,
        "assumptions": ASSUMPTIONS,
    }


def events_csv(ev: Evaluation) -> str:
    """One row per event class per layer."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "event", "count", "unit_fj", "energy_j"])
    for name, event, n, unit, e in ev.energy.events:
        w.writerow([name, event, n, repr(float(unit)), repr(float(e))])
    return buf.getvalue()


def summary_csv(doc: dict) -> str:
    """Flattened scalar view of a report dict, for cross-checking against the JSON."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for key, value in _flatten(doc):
        w.writerow([key, value])
    return buf.getvalue()


def _flatten(doc, prefix=""):
    if isinstance(doc, dict):
        for k in sorted(doc):
            yield from _flatten(doc[k], f"{prefix}{k}.")
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], repr(doc) if isinstance(doc, float) else doc


def energy_plot_csv(ev: Evaluation) -> str:
    """Breakdown series: (partition, category, joules)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["partition", "category", "energy_j"])
    for part, d in (("component", ev.energy.by_component),
                    ("memory_level", ev.energy.by_level),
                    ("data_type", ev.energy.by_type)):
        for k, v in d.items():
            w.writerow([part, k, repr(float(v))])
    return buf.getvalue()


def area_plot_csv(ev: Evaluation) -> str:
    a = area(ev.cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "area_um2", "fraction"])
    total = sum(a.components_um2.values())
    for k, v in a.components_um2.items():
        w.writerow([k, repr(float(v)), repr(v / total if total else 0.0)])
    return buf.getvalue()


def comparison_to_dict(c: ComparisonReport, ablation: dict | None = None) -> dict:
    d = {"schema_version": SCHEMA_VERSION, **c.as_dict()}
    if ablation is not None:
        d["feature_ablation"] = ablation
    return d


def savings_plot_csv(c: ComparisonReport) -> str:
    """Energy saved by A relative to B, per category, mirroring the savings breakdown bars."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["partition", "category", "saving_j"])
    for part, d in (("component", c.component_delta_j),
                    ("memory_level", c.level_delta_j),
                    ("data_type", c.type_delta_j)):
        for k, v in d.items():
            w.writerow([part, k, repr(v)])
    return buf.getvalue()


def config_snapshot(cfg) -> dict:
    return config_to_dict(cfg)
