"""Declarative network-shape tables and a propagation validator.

Each network is a linear chain of layer rows with an expected output
shape per row. Propagation rules: AvgPool and MaxPool halve the
spatial size, Upsample doubles it, Conv/DBlk/UBlk/CAI-Conv set the
channel count, GAP collapses the spatial dimensions to 1x1, and FC
(which requires collapsed input) sets the channel count. The validator
recomputes every shape and compares it with the table.

Four networks ship built in: the mask generator (encoder, attention
block, decoder), the parameter predictor, the conditional
discriminator, and the matte generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "ShapeTrace",
    "builtin_specs",
    "propagate_shapes",
    "validate_all",
    "param_count_estimate",
]

KINDS = ("Conv", "DBlk", "UBlk", "CAI-Conv", "GAP", "FC")
RESAMPLES = ("none", "AvgPool", "MaxPool", "Upsample")

ENCODER_TERMINAL_CHANNELS = 512
CAI_OUT_CHANNELS = 512
DECODER_CONCAT_CHANNELS = ENCODER_TERMINAL_CHANNELS + CAI_OUT_CHANNELS


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    resample: str = "none"
    out_channels: Optional[int] = None
    notes: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.resample not in RESAMPLES:
            raise ValueError(f"unknown resample {self.resample!r}")
        if self.kind in ("GAP", "FC") and self.resample != "none":
            raise ValueError(f"{self.kind} cannot carry a resample step")
        if self.kind != "GAP" and self.out_channels is None:
            raise ValueError(f"{self.kind} requires out_channels")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple
    layers: tuple
    expected_shapes: tuple
    notes: str = ""

    def __post_init__(self):
        if len(self.layers) != len(self.expected_shapes):
            raise ValueError("expected_shapes length must match layers length")


@dataclass(frozen=True)
class ShapeTrace:
    computed: tuple
    passed: tuple

    @property
    def all_pass(self) -> bool:
        return all(self.passed)

    @property
    def terminal_shape(self) -> Optional[tuple]:
        return self.computed[-1] if self.computed else None


def propagate_shapes(spec: NetworkSpec) -> ShapeTrace:
    """Recompute every layer's output shape and compare with the table."""
    h, w, c = spec.input_shape
    computed = []
    passed = []
    for i, (layer, expected) in enumerate(zip(spec.layers, spec.expected_shapes)):
        if layer.kind == "GAP":
            h, w = 1, 1
            if layer.out_channels is not None:
                c = layer.out_channels
        elif layer.kind == "FC":
            if (h, w) != (1, 1):
                raise ValueError(f"{spec.name} layer {i}: FC requires spatially "
                                 f"collapsed input, got {h}x{w}")
            c = layer.out_channels
        else:
            if layer.resample in ("AvgPool", "MaxPool"):
                if h % 2 or w % 2:
                    raise ValueError(f"{spec.name} layer {i}: cannot halve odd "
                                     f"spatial size {h}x{w}")
                h, w = h // 2, w // 2
            elif layer.resample == "Upsample":
                h, w = h * 2, w * 2
            c = layer.out_channels
        computed.append((h, w, c))
        passed.append((h, w, c) == tuple(expected))
    return ShapeTrace(computed=tuple(computed), passed=tuple(passed))


def _mask_generator_spec() -> NetworkSpec:
    layers = (
        LayerSpec("Conv", out_channels=32),
        LayerSpec("DBlk", "AvgPool", 64),
        LayerSpec("DBlk", "AvgPool", 128),
        LayerSpec("DBlk", "AvgPool", 256),
        LayerSpec("DBlk", "AvgPool", 512),
        LayerSpec("CAI-Conv", out_channels=512, notes="score projection"),
        LayerSpec("CAI-Conv", out_channels=512, notes="score projection"),
        LayerSpec("CAI-Conv", out_channels=512, notes="value projection"),
        LayerSpec("CAI-Conv", out_channels=512, notes="output projection"),
        LayerSpec("UBlk", "Upsample", 512,
                  notes="consumes the 1024-channel concat of attention and encoder"),
        LayerSpec("UBlk", "Upsample", 256),
        LayerSpec("UBlk", "Upsample", 128),
        LayerSpec("UBlk", "Upsample", 64),
        LayerSpec("Conv", out_channels=1),
    )
    expected = (
        (256, 256, 32),
        (128, 128, 64),
        (64, 64, 128),
        (32, 32, 256),
        (16, 16, 512),
        (16, 16, 512),
        (16, 16, 512),
        (16, 16, 512),
        (16, 16, 512),
        (32, 32, 512),
        (64, 64, 256),
        (128, 128, 128),
        (256, 256, 64),
        (256, 256, 1),
    )
    return NetworkSpec(
        name="G_S",
        input_shape=(256, 256, 4),
        layers=layers,
        expected_shapes=expected,
        notes="one of two parallel 4-channel encoder branches (image + one mask); "
              "a 5-channel single-encoder variant exists but is not the default",
    )


def _param_predictor_spec() -> NetworkSpec:
    layers = (
        LayerSpec("DBlk", "MaxPool", 32),
        LayerSpec("DBlk", "MaxPool", 64),
        LayerSpec("DBlk", "MaxPool", 128),
        LayerSpec("DBlk", "MaxPool", 256),
        LayerSpec("GAP"),
        LayerSpec("FC", out_channels=6),
    )
    expected = (
        (128, 128, 32),
        (64, 64, 64),
        (32, 32, 128),
        (16, 16, 256),
        (1, 1, 256),
        (1, 1, 6),
    )
    return NetworkSpec(name="E_P", input_shape=(256, 256, 4),
                       layers=layers, expected_shapes=expected,
                       notes="input: image + predicted shadow mask")


def _discriminator_spec() -> NetworkSpec:
    layers = (
        LayerSpec("DBlk", "AvgPool", 64),
        LayerSpec("DBlk", "AvgPool", 128),
        LayerSpec("DBlk", "AvgPool", 256),
        LayerSpec("DBlk", "AvgPool", 512),
        LayerSpec("Conv", out_channels=1, notes="patch score map"),
    )
    expected = (
        (128, 128, 64),
        (64, 64, 128),
        (32, 32, 256),
        (16, 16, 512),
        (16, 16, 1),
    )
    return NetworkSpec(name="D", input_shape=(256, 256, 5),
                       layers=layers, expected_shapes=expected,
                       notes="input triplet: shadow mask + image + object mask")


def _matte_generator_spec() -> NetworkSpec:
    layers = (
        LayerSpec("Conv", out_channels=32),
        LayerSpec("DBlk", "AvgPool", 64),
        LayerSpec("DBlk", "AvgPool", 128),
        LayerSpec("DBlk", "AvgPool", 256),
        LayerSpec("DBlk", "AvgPool", 512),
        LayerSpec("UBlk", "Upsample", 512),
        LayerSpec("UBlk", "Upsample", 256),
        LayerSpec("UBlk", "Upsample", 128),
        LayerSpec("UBlk", "Upsample", 64),
        LayerSpec("Conv", out_channels=1),
    )
    expected = (
        (256, 256, 32),
        (128, 128, 64),
        (64, 64, 128),
        (32, 32, 256),
        (16, 16, 512),
        (32, 32, 512),
        (64, 64, 256),
        (128, 128, 128),
        (256, 256, 64),
        (256, 256, 1),
    )
    return NetworkSpec(name="G_M", input_shape=(256, 256, 7),
                       layers=layers, expected_shapes=expected,
                       notes="encoder/decoder clone of G_S without attention; "
                             "input: image + darkened image + shadow mask")


def builtin_specs() -> dict:
    """The four shipped network tables keyed by name."""
    specs = (_mask_generator_spec(), _param_predictor_spec(),
             _discriminator_spec(), _matte_generator_spec())
    return {spec.name: spec for spec in specs}


# Channel widths each network's input must provide: image planes plus
# mask planes (e.g. the discriminator scores a mask+image+mask triplet).
INPUT_CHANNEL_CONTRACTS = {
    "G_S": 3 + 1,
    "E_P": 3 + 1,
    "D": 1 + 3 + 1,
    "G_M": 3 + 3 + 1,
}


def _cross_checks(specs: dict) -> tuple:
    checks = []
    failures = []
    gs = specs.get("G_S")
    if gs is not None:
        trace = propagate_shapes(gs)
        encoder_shape = trace.computed[4]
        cai_shape = trace.computed[8]
        checks.append({
            "name": "decoder-concat-channels",
            "expected": DECODER_CONCAT_CHANNELS,
            "actual": cai_shape[2] + encoder_shape[2],
            "pass": cai_shape[2] + encoder_shape[2] == DECODER_CONCAT_CHANNELS,
        })
        checks.append({
            "name": "encoder-cai-decoder-resolution",
            "expected": [16, 16],
            "actual": [cai_shape[0], cai_shape[1]],
            "pass": encoder_shape[:2] == (16, 16) and cai_shape[:2] == (16, 16),
        })
    for name, channels in INPUT_CHANNEL_CONTRACTS.items():
        spec = specs.get(name)
        if spec is None:
            continue
        ok = spec.input_shape[2] == channels
        checks.append({"name": f"{name}-input-channels", "expected": channels,
                       "actual": spec.input_shape[2], "pass": ok})
        if not ok:
            failures.append({"network": name, "layer": 0,
                             "computed": list(spec.input_shape),
                             "expected": [spec.input_shape[0], spec.input_shape[1],
                                          channels]})
    return checks, failures


def validate_all(specs: Optional[dict] = None) -> dict:
    """Propagate every spec and report per-layer passes plus cross checks."""
    if specs is None:
        specs = builtin_specs()
    networks = {}
    failures = []
    for name, spec in specs.items():
        trace = propagate_shapes(spec)
        rows = []
        for i, (layer, computed, expected, ok) in enumerate(
                zip(spec.layers, trace.computed, spec.expected_shapes, trace.passed)):
            rows.append({"layer": i, "kind": layer.kind, "resample": layer.resample,
                         "computed": list(computed), "expected": list(expected),
                         "pass": ok})
            if not ok:
                failures.append({"network": name, "layer": i,
                                 "computed": list(computed),
                                 "expected": list(expected)})
        networks[name] = {
            "pass": trace.all_pass,
            "layers_passed": sum(trace.passed),
            "layers_total": len(trace.passed),
            "input_shape": list(spec.input_shape),
            "terminal_shape": list(trace.terminal_shape) if trace.terminal_shape else None,
            "trace": rows,
        }
    cross, input_failures = _cross_checks(specs)
    failures.extend(input_failures)
    overall = all(n["pass"] for n in networks.values()) and all(c["pass"] for c in cross)
    return {"pass": overall, "networks": networks,
            "cross_checks": cross, "failures": failures}


def param_count_estimate(spec: NetworkSpec, conv_kernel: int = 3) -> int:
    """Rough parameter count: k*k*C_in*C_out + C_out per parameterized layer.

    Conv/DBlk/UBlk use ``conv_kernel``; CAI-Conv and FC are 1x1 maps;
    GAP carries no parameters. Informational only, since the tables do
    not pin kernel sizes.
    """
    if conv_kernel < 1:
        raise ValueError("conv_kernel must be >= 1")
    c_in = spec.input_shape[2]
    total = 0
    for layer in spec.layers:
        if layer.kind == "GAP":
            if layer.out_channels is not None:
                c_in = layer.out_channels
            continue
        k = 1 if layer.kind in ("CAI-Conv", "FC") else conv_kernel
        c_out = layer.out_channels
        total += k * k * c_in * c_out + c_out
        c_in = c_out
    return total
