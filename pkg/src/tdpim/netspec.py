"""CNN/DNN network descriptions: layer shapes, chaining checks and reuse statistics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

LAYER_KINDS = ("conv", "fc", "maxpool")
_INT_FIELDS = ("C", "D", "H", "W", "Z", "G", "S", "P", "weight_bits", "input_bits")


class NetworkError(ValueError):
    """Raised for malformed network documents or inconsistent layer shapes."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    C: int
    D: int
    H: int
    W: int
    Z: int
    G: int
    S: int = 1
    P: int = 0
    weight_bits: int = 8
    input_bits: int = 8

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise NetworkError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        for f in ("C", "D", "H", "W", "Z", "G", "S", "weight_bits", "input_bits"):
            if getattr(self, f) < 1:
                raise NetworkError(f"layer {self.name!r}: {f} must be >= 1")
        if self.P < 0:
            raise NetworkError(f"layer {self.name!r}: P must be >= 0")
        if self.kind == "fc" and not (
            self.Z == self.H and self.G == self.W and self.S == 1 and self.P == 0
        ):
            raise NetworkError(
                f"layer {self.name!r}: FC constraint violated (need Z=H, G=W, S=1, P=0)"
            )
        if self.kind == "maxpool" and self.D != self.C:
            raise NetworkError(f"layer {self.name!r}: maxpool needs D == C")
        for extent, size, axis in ((self.H, self.Z, "height"), (self.W, self.G, "width")):
            span = extent + 2 * self.P - size
            if span < 0 or span % self.S:
                raise NetworkError(
                    f"layer {self.name!r}: non-integer output {axis} "
                    f"({extent} + 2*{self.P} - {size}) / {self.S}"
                )

    @property
    def E(self) -> int:
        return (self.H + 2 * self.P - self.Z) // self.S + 1

    @property
    def F(self) -> int:
        return (self.W + 2 * self.P - self.G) // self.S + 1

    @property
    def has_weights(self) -> bool:
        return self.kind != "maxpool"

    @property
    def window_rows(self) -> int:
        """Length of one unrolled input window (C*Z*G)."""
        return self.C * self.Z * self.G


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    batch: int = 1

    def __post_init__(self):
        if self.batch < 1:
            raise NetworkError("batch must be >= 1")
        for idx in range(1, len(self.layers)):
            prev, cur = self.layers[idx - 1], self.layers[idx]
            expected = (prev.D, prev.E, prev.F)
            found = (cur.C, cur.H, cur.W)
            if expected != found:
                raise NetworkError(
                    f"dimension chain mismatch at layer {idx} ({cur.name!r}): "
                    f"expected (C,H,W)={expected}, found {found}"
                )

    @property
    def weight_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.has_weights]


@dataclass(frozen=True)
class LayerStats:
    macs: int
    input_count: int
    output_count: int
    reuse_factor: Fraction


def layer_stats(layer: LayerSpec, M: int = 1) -> LayerStats:
    if layer.has_weights:
        macs = M * layer.D * layer.E * layer.F * layer.C * layer.Z * layer.G
        reuse = Fraction(layer.D * layer.Z * layer.G, layer.S ** 2)
    else:
        macs = 0
        reuse = Fraction(layer.Z * layer.G, layer.S ** 2)
    return LayerStats(
        macs=macs,
        input_count=M * layer.C * layer.H * layer.W,
        output_count=M * layer.D * layer.E * layer.F,
        reuse_factor=reuse,
    )


def network_macs(net: NetworkSpec) -> int:
    return sum(layer_stats(l, net.batch).macs for l in net.layers)


def _layer_from_dict(idx: int, raw: Any) -> LayerSpec:
    if not isinstance(raw, dict):
        raise NetworkError(f"layer {idx}: expected an object")
    for key in ("name", "kind", "C", "H", "W"):
        if key not in raw:
            raise NetworkError(f"layer {idx}: missing field {key!r}")
    kind = raw["kind"]
    if not isinstance(raw["name"], str) or not isinstance(kind, str):
        raise NetworkError(f"layer {idx}: name and kind must be strings")
    values = dict(raw)
    if kind == "fc":
        values.setdefault("Z", values["H"])
        values.setdefault("G", values["W"])
    if kind == "maxpool":
        values.setdefault("D", values["C"])
    for key in ("D", "Z", "G"):
        if key not in values:
            raise NetworkError(f"layer {idx}: missing field {key!r}")
    unknown = set(values) - {"name", "kind", *_INT_FIELDS}
    if unknown:
        raise NetworkError(f"layer {idx}: unknown fields {sorted(unknown)}")
    for key in _INT_FIELDS:
        if key in values and (
            not isinstance(values[key], int) or isinstance(values[key], bool)
        ):
            raise NetworkError(f"layer {idx}: field {key!r} must be an integer")
    try:
        return LayerSpec(**values)
    except NetworkError as exc:
        raise NetworkError(f"layer {idx}: {exc}") from None


def network_from_dict(doc: Any) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise NetworkError("network document must be an object")
    if "name" not in doc or "layers" not in doc:
        raise NetworkError("network document needs 'name' and 'layers'")
    if not isinstance(doc["layers"], list):
        raise NetworkError("'layers' must be a list")
    batch = doc.get("batch", 1)
    if not isinstance(batch, int) or isinstance(batch, bool):
        raise NetworkError("'batch' must be an integer")
    layers = tuple(_layer_from_dict(i, raw) for i, raw in enumerate(doc["layers"]))
    return NetworkSpec(name=str(doc["name"]), layers=layers, batch=batch)


def parse_network(text: str) -> NetworkSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from None
    return network_from_dict(doc)


def network_to_dict(net: NetworkSpec) -> dict:
    return {
        "name": net.name,
        "batch": net.batch,
        "layers": [asdict(l) for l in net.layers],
    }


def emit_network(net: NetworkSpec) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


def load_network(path: str | Path) -> NetworkSpec:
    return parse_network(Path(path).read_text())


BUNDLED_NETWORKS = ("vgg_d", "msra3", "mlp_784_64_10")


def bundled_network(name: str) -> NetworkSpec:
    path = Path(__file__).parent / "networks" / f"{name}.json"
    if not path.exists():
        raise NetworkError(f"no bundled network named {name!r}")
    return load_network(path)
