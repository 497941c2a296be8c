"""Batch front-end: map, report and simulate.

Exit codes: 0 success, 2 validation error, 3 capacity error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, reports
from .archcfg import ConfigError, load_config, preset, validate_config
from .netspec import BUNDLED_NETWORKS, NetworkError, bundled_network, load_network
from .o2ir import CapacityError, MappingError, emit_mappings, map_network, mapping_commands
from .perfmodel import CapacityExceeded, compare, evaluate, feature_ablation
from .tdcore import (
    NoiseModel, TimeDomainError, margin_check, planes_from_codes, run_network,
)
from .tensorio import TensorFileError, read_tensors, write_tensors

EXIT_OK, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_IO = 0, 2, 3, 4
DATA_DIR = Path(__file__).parent / "data"

STYLE_FLAGS = {
    "style": ("mapping_style", {"o2ir": "o2ir", "naive": "naive"}),
    "interface": ("interface_style", {"time": "time_domain", "voltage": "voltage_domain"}),
    "buffers": ("buffer_style", {"alb": "alb", "hier": "hierarchical"}),
}


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdpim", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"tdpim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--net", required=True,
                        help=f"network JSON path or bundled name ({', '.join(BUNDLED_NETWORKS)})")
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", help="preset name (default timely_8b)")
    src.add_argument("--config", type=Path, help="config JSON path")
    common.add_argument("--chips", type=int, default=1, help="number of chips (default 1)")
    common.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default out)")
    common.add_argument("--format", default="json,csv", help="comma list of json,csv")
    common.add_argument("--style", choices=sorted(STYLE_FLAGS["style"][1]), help="mapping style")
    common.add_argument("--interface", choices=sorted(STYLE_FLAGS["interface"][1]), help="time (DTC/TDC) or voltage (DAC/ADC)")
    common.add_argument("--buffers", choices=sorted(STYLE_FLAGS["buffers"][1]), help="analog local buffers or hierarchical digital buffers")

    sub.add_parser("map", parents=[common], help="place weights and write mapping files")
    rp = sub.add_parser("report", parents=[common], help="energy/perf/area reports")
    rp.add_argument("--compare", metavar="PRESET", help="baseline preset for a ratio table")
    sp = sub.add_parser("simulate", parents=[common], help="functional simulation vs the integer oracle")
    sp.add_argument("--weights", type=Path, help="weight tensor file (default: bundled data for bundled nets)")
    sp.add_argument("--inputs", type=Path, help="input tensor file (default: same as weights)")
    sp.add_argument("--noise", choices=("on", "off"), default="off")
    sp.add_argument("--eps-x", type=float, help="per X-subBuf error std in ps (overrides config)")
    sp.add_argument("--eps-cmp", type=float, help="comparator error std in ps (overrides config)")
    return ap


# -- loading -----------------------------------------------------------------------

def _load_net(spec: str):
    if spec in BUNDLED_NETWORKS:
        return bundled_network(spec)
    try:
        return load_network(spec)
    except OSError as exc:
        raise CliError(f"cannot read network {spec}: {exc.strerror}", EXIT_IO) from None


def _load_cfg(args):
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        else:
            cfg = preset(args.preset or "timely_8b")
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc.strerror}", EXIT_IO) from None
    changes = {}
    for flag, (field, values) in STYLE_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            changes[field] = values[v]
    if getattr(args, "eps_x", None) is not None:
        changes["eps_x_ps"] = args.eps_x
    if getattr(args, "eps_cmp", None) is not None:
        changes["eps_cmp_ps"] = args.eps_cmp
    if changes:
        cfg = cfg.replace(**changes)
        if {"mapping_style", "interface_style", "buffer_style"} & set(changes):
            cfg = cfg.rebind_counts()
    bad = validate_config(cfg)
    if bad:
        raise CliError("invalid config: " + "; ".join(bad), EXIT_VALIDATION)
    if args.chips < 1:
        raise CliError("--chips must be >= 1", EXIT_VALIDATION)
    return cfg


def _formats(args) -> set:
    fm = {f.strip() for f in args.format.split(",") if f.strip()}
    if not fm or fm - {"json", "csv"}:
        raise CliError(f"invalid --format {args.format!r}; use json, csv or json,csv", EXIT_VALIDATION)
    return fm


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.paths = []
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CliError(f"cannot create {out}: {exc.strerror}", EXIT_IO) from None

    def text(self, name: str, body: str):
        p = self.out / name
        try:
            p.write_text(body)
        except OSError as exc:
            raise CliError(f"cannot write {p}: {exc.strerror}", EXIT_IO) from None
        self.paths.append(name)

    def manifest(self, args, cfg, extra=None):
        doc = {
            "tool": "tdpim",
            "version": __version__,
            "command": args.command,
            "network": args.net,
            "config": str(args.config) if args.config else (args.preset or "timely_8b"),
            "config_name": cfg.name,
            "seed": args.seed,
            "chips": args.chips,
            "arguments": {k: (str(v) if isinstance(v, Path) else v)
                          for k, v in sorted(vars(args).items()) if k not in ("out",)},
            "outputs": sorted(self.paths),
            **(extra or {}),
        }
        self.text("manifest.json", reports.dumps(doc))


# -- commands --------------------------------------------------------------------------

def cmd_map(args) -> dict:
    net, cfg = _load_net(args.net), _load_cfg(args)
    fm = _formats(args)
    maps = map_network(net, cfg, args.chips)
    w = _Writer(args.out)
    if "json" in fm:
        w.text("mappings.json", emit_mappings(maps))
    cmds = [c for m in maps if m is not None for c in mapping_commands(m)]
    w.text("mapping_commands.txt", "\n".join(cmds) + "\n")
    rows = ["layer,replication,subchips,first_subchip,rows,cols,utilization"]
    summary = []
    for m in maps:
        if m is None:
            continue
        rows.append(f"{m.layer.name},{m.replication},{m.subchips},{m.first_subchip},"
                    f"{m.rows},{m.cols},{m.utilization!r}")
        summary.append((m.layer.name, m.subchips, m.utilization))
    if "csv" in fm:
        w.text("utilization.csv", "\n".join(rows) + "\n")
    w.manifest(args, cfg)
    for name, sc, u in summary:
        print(f"{name:>10}  sub-Chips {sc:4d}  utilization {u:.4f}")
    print(f"total sub-Chips {sum(s for _, s, _ in summary)} of {args.chips * cfg.chi}")
    return {"mappings": maps}


def cmd_report(args) -> dict:
    net, cfg = _load_net(args.net), _load_cfg(args)
    fm = _formats(args)
    ev = evaluate(net, cfg, args.chips)
    doc = reports.evaluation_to_dict(ev)
    w = _Writer(args.out)
    if "json" in fm:
        w.text("report.json", reports.dumps(doc))
    if "csv" in fm:
        w.text("report.csv", reports.summary_csv(doc))
        w.text("events.csv", reports.events_csv(ev))
    w.text("plot_energy_breakdown.csv", reports.energy_plot_csv(ev))
    w.text("plot_area_breakdown.csv", reports.area_plot_csv(ev))
    w.text("assumptions.json", reports.dumps(doc["assumptions"]))
    comp = None
    if args.compare:
        base = preset(args.compare)
        bev = evaluate(net, base, args.chips)
        comp = compare(ev, bev)
        abl = None
        same_geometry = all(getattr(base, f) == getattr(cfg, f) for f in ("B", "R_cb", "K_cb", "bits_per_cell", "weight_bits"))
        if same_geometry:
            abl = feature_ablation(net, base, args.chips)
        cdoc = reports.comparison_to_dict(comp, abl)
        if "json" in fm:
            w.text("comparison.json", reports.dumps(cdoc))
        if "csv" in fm:
            w.text("comparison.csv", reports.summary_csv(cdoc))
        w.text("plot_energy_savings.csv", reports.savings_plot_csv(comp))
    w.manifest(args, cfg)
    t = ev.energy.total_j
    print(f"{net.name} on {cfg.name}: energy {t * 1e3:.4f} mJ, "
          f"{ev.perf.energy_efficiency / 1e12:.2f} TOPs/W, "
          f"density {ev.perf.computational_density / 1e12:.2f} TOPs/s/mm2")
    if comp is not None:
        print(f"vs {comp.b}: energy-efficiency ratio {comp.energy_efficiency_ratio:.2f}x, "
              f"L1 input read ratio {comp.l1_input_read_ratio:.2f}x")
    return {"evaluation": ev, "comparison": comp}


def _bundled_data(net_spec: str) -> Path | None:
    p = DATA_DIR / f"{net_spec}.tdt"
    return p if p.exists() else None


def cmd_simulate(args) -> dict:
    net, cfg = _load_net(args.net), _load_cfg(args)
    _formats(args)
    wpath = args.weights or _bundled_data(args.net)
    if wpath is None:
        raise CliError("--weights is required for non-bundled networks", EXIT_VALIDATION)
    ipath = args.inputs or wpath
    try:
        wt, wmeta = read_tensors(wpath)
        it, _ = read_tensors(ipath) if ipath != wpath else (wt, wmeta)
    except TensorFileError as exc:
        raise CliError(str(exc), EXIT_IO if "cannot read" in str(exc) else EXIT_VALIDATION) from None
    if "inputs" not in it:
        raise CliError(f"{ipath}: no tensor named 'inputs'", EXIT_VALIDATION)
    maps = map_network(net, cfg, args.chips)
    weights = []
    shifts = []
    wshifts = wmeta.get("shifts", {})
    for layer in net.layers:
        shifts.append(int(wshifts.get(layer.name, 0)))
        if not layer.has_weights:
            weights.append(None)
            continue
        if layer.name not in wt:
            raise CliError(f"{wpath}: no weights for layer {layer.name!r}", EXIT_VALIDATION)
        codes = wt[layer.name].astype(np.int64)
        if codes.size != layer.D * layer.C * layer.Z * layer.G:
            raise CliError(
                f"weights for {layer.name!r} have shape {codes.shape}, layer needs "
                f"{layer.D}x{layer.C}x{layer.Z}x{layer.G}", EXIT_VALIDATION)
        weights.append(planes_from_codes(codes.reshape(layer.D, layer.C, layer.Z, layer.G), 1.0, cfg))
    x = it["inputs"].astype(np.int64)
    noise = NoiseModel(eps_x=cfg.eps_x_ps, eps_cmp=cfg.eps_cmp_ps, seed=args.seed,
                       enabled=args.noise == "on")
    ref = run_network(net, x, weights, maps, cfg, shifts=shifts, reference=True)
    clean = run_network(net, x, weights, maps, cfg, shifts=shifts)
    out = run_network(net, x, weights, maps, cfg, noise=noise, shifts=shifts) if noise.enabled else clean
    n = ref.shape[0]
    ref_cls = ref.reshape(n, -1).argmax(1)
    out_cls = out.reshape(n, -1).argmax(1)
    mc = margin_check(noise, cfg)
    summary = {
        "samples": int(n),
        "noise": args.noise,
        "eps_x_ps": cfg.eps_x_ps,
        "eps_cmp_ps": cfg.eps_cmp_ps,
        "noiseless_matches_oracle": bool(np.array_equal(clean, ref)),
        "disagreement": float(np.mean(out_cls != ref_cls)),
        "max_abs_psum_error": int(np.max(np.abs(out - ref))) if out.size else 0,
        "margin_check": {"budget_ps": mc.budget_ps, "used_ps": mc.used_ps, "pass": mc.passed},
    }
    if "labels" in it:
        lab = it["labels"].astype(np.int64)
        summary["accuracy_oracle"] = float(np.mean(ref_cls == lab))
        summary["accuracy_simulated"] = float(np.mean(out_cls == lab))
    w = _Writer(args.out)
    try:
        write_tensors(args.out / "outputs.tdt", {"outputs": out.astype(np.int64)},
                      network=net.name, seed=args.seed)
    except OSError as exc:
        raise CliError(f"cannot write outputs: {exc.strerror}", EXIT_IO) from None
    w.paths.append("outputs.tdt")
    w.text("fidelity.json", reports.dumps(summary))
    w.manifest(args, cfg, {"weights": str(wpath), "inputs": str(ipath)})
    print(f"disagreement {summary['disagreement']:.4f} over {n} samples; "
          f"noiseless exact: {summary['noiseless_matches_oracle']}; "
          f"margin {'pass' if mc.passed else 'fail'} ({mc.used_ps:.1f} of {mc.budget_ps / 2:.1f} ps)")
    return summary


COMMANDS = {"map": cmd_map, "report": cmd_report, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CapacityError, CapacityExceeded) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NetworkError, ConfigError, MappingError, TimeDomainError, TensorFileError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
