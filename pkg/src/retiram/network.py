"""Network construction: declarative layer stacks with a global-pool head.

A :class:`NetworkSpec` is a flat list of layers (conv / maxpool /
globalpool / dense) with explicit per-layer padding and an expected
output size that the builder verifies. Every conv layer is followed by a
leaky rectifier (slope 0.01) and carries an *untied* bias: one value per
output channel and spatial position, which is why spatial bias entries
dominate the parameter counts of the large stacks.

The registry in :func:`builtin_specs` ships two 448-pixel reference
stacks (``net5``, ``net4``), two truncated high-resolution-map variants
used for activation maps (``net5_ram128``, ``net5_ram256``), and a small
64-pixel stack (``net_small``) that trains in minutes on a CPU while
exercising the same head and bias scheme.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import autodiff as ad
from .autodiff import NO_PAD, PadSpec, Tensor
from .errors import ConfigurationError

LEAKY_SLOPE = 0.01

CHECKPOINT_MAGIC = b"RAMN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str                      # conv | maxpool | globalpool | dense
    units: int = 0                 # output channels (conv) or 1 (dense)
    filt: int = 0
    stride: int = 1
    pad: PadSpec = NO_PAD
    expected_size: Optional[int] = None


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_size: int
    layers: tuple[LayerSpec, ...]
    in_channels: int = 3

    def validate(self) -> None:
        kinds = [l.kind for l in self.layers]
        for i, k in enumerate(kinds):
            if k not in ("conv", "maxpool", "globalpool", "dense"):
                raise ConfigurationError(f"layer {i}: unknown kind {k!r}")
        if kinds.count("globalpool") != 1 or kinds.count("dense") != 1:
            raise ConfigurationError(
                f"{self.name}: need exactly one globalpool and one dense layer"
            )
        if kinds[-2:] != ["globalpool", "dense"]:
            raise ConfigurationError(f"{self.name}: stack must end with globalpool, dense")
        if self.layers[-1].units != 1:
            raise ConfigurationError(f"{self.name}: dense output width must be 1")
        if "conv" not in kinds:
            raise ConfigurationError(f"{self.name}: at least one conv layer required")

    @property
    def last_conv_units(self) -> int:
        return [l for l in self.layers if l.kind == "conv"][-1].units


def solve_pad(in_size: int, filt: int, stride: int, out_size: int) -> PadSpec:
    """Smallest total zero padding that makes a window scan hit ``out_size``.

    Output size follows floor arithmetic: (in + pad - filt) // stride + 1.
    An odd total is split with the extra pixel on the bottom/right.
    """
    lo = stride * (out_size - 1) + filt - in_size
    hi = lo + stride - 1
    total = max(0, lo)
    if total > hi:
        raise ConfigurationError(
            f"no padding makes {in_size} -> {out_size} with filter {filt} stride {stride}"
        )
    near, far = total // 2, total - total // 2
    return (near, far, near, far)


def _table_to_layers(input_size: int, table: list[tuple]) -> tuple[LayerSpec, ...]:
    """Turn (kind, units, filt, stride, out_size) rows into layers, solving pads."""
    layers = []
    size = input_size
    for kind, units, filt, stride, out in table:
        pad = solve_pad(size, filt, stride, out) if kind == "conv" else NO_PAD
        if kind == "maxpool" and ad.conv_output_size(size, filt, stride, 0) != out:
            raise ConfigurationError(f"pool row {size}->{out} unreachable without padding")
        layers.append(LayerSpec(kind, units or 0, filt, stride, pad, out))
        size = out
    layers.append(LayerSpec("globalpool"))
    layers.append(LayerSpec("dense", units=1))
    return tuple(layers)


# 448-pixel reference stacks. Columns: kind, units, filter, stride, output size.
_NET5_TABLE = [
    ("conv", 32, 5, 2, 224),
    ("conv", 32, 3, 1, 224),
    ("maxpool", None, 3, 2, 111),
    ("conv", 64, 5, 2, 56),
    ("conv", 64, 3, 1, 56),
    ("conv", 64, 3, 1, 56),
    ("maxpool", None, 3, 2, 27),
    ("conv", 128, 3, 1, 27),
    ("conv", 128, 3, 1, 27),
    ("conv", 128, 3, 1, 27),
    ("maxpool", None, 3, 2, 13),
    ("conv", 256, 3, 1, 13),
    ("conv", 256, 3, 1, 13),
    ("conv", 256, 3, 1, 13),
    ("maxpool", None, 3, 2, 6),
    ("conv", 512, 3, 1, 6),
    ("conv", 512, 3, 1, 6),
]

_NET4_TABLE = [
    ("conv", 32, 4, 2, 224),
    ("conv", 32, 4, 1, 225),
    ("maxpool", None, 3, 2, 112),
    ("conv", 64, 4, 2, 56),
    ("conv", 64, 4, 1, 57),
    ("conv", 64, 4, 1, 56),
    ("maxpool", None, 3, 2, 27),
    ("conv", 128, 4, 1, 28),
    ("conv", 128, 4, 1, 27),
    ("conv", 128, 4, 1, 28),
    ("maxpool", None, 3, 2, 13),
    ("conv", 256, 4, 1, 14),
    ("conv", 256, 4, 1, 13),
    ("conv", 256, 4, 1, 14),
    ("maxpool", None, 3, 2, 6),
    ("conv", 512, 4, 1, 6),
]

_NET_SMALL_TABLE = [
    ("conv", 32, 5, 2, 32),
    ("conv", 32, 3, 1, 32),
    ("maxpool", None, 3, 2, 15),
    ("conv", 64, 3, 1, 15),
    ("conv", 64, 3, 1, 15),
    ("maxpool", None, 3, 2, 7),
    ("conv", 64, 3, 1, 7),
]


def _ram_variant_128() -> NetworkSpec:
    # Truncation of the net5 stack for fine activation maps at 128 px:
    # keep the first eight conv/pool rows plus the 128-channel block, set
    # every stride to 1 except the second maxpool, and drop the padding of
    # the convs after the first block's f5 layer. Size trace:
    # 128 ->127 ->127 ->125 ->125 ->123 ->121 ->60 ->58 ->56 ->54.
    rows = [
        ("conv", 32, 5, 1, (1, 2, 1, 2), 127),
        ("conv", 32, 3, 1, (1, 1, 1, 1), 127),
        ("maxpool", 0, 3, 1, NO_PAD, 125),
        ("conv", 64, 5, 1, (2, 2, 2, 2), 125),
        ("conv", 64, 3, 1, NO_PAD, 123),
        ("conv", 64, 3, 1, NO_PAD, 121),
        ("maxpool", 0, 3, 2, NO_PAD, 60),
        ("conv", 128, 3, 1, NO_PAD, 58),
        ("conv", 128, 3, 1, NO_PAD, 56),
        ("conv", 128, 3, 1, NO_PAD, 54),
    ]
    layers = [LayerSpec(k, u, f, s, p, o) for k, u, f, s, p, o in rows]
    layers += [LayerSpec("globalpool"), LayerSpec("dense", units=1)]
    return NetworkSpec("net5_ram128", 128, tuple(layers))


def _ram_variant_256() -> NetworkSpec:
    # Truncation of the net5 stack for 256 px inputs: keep everything up to
    # the 256-channel block, drop the two deepest maxpools, keep stride 2
    # only on the first conv and the second maxpool, and run the final
    # block unpadded. Size trace:
    # 256 ->128 ->128 ->126 ->126 ->126 ->126 ->62 ->62 ->62 ->62 ->60 ->58 ->56.
    rows = [
        ("conv", 32, 5, 2, (1, 2, 1, 2), 128),
        ("conv", 32, 3, 1, (1, 1, 1, 1), 128),
        ("maxpool", 0, 3, 1, NO_PAD, 126),
        ("conv", 64, 5, 1, (2, 2, 2, 2), 126),
        ("conv", 64, 3, 1, (1, 1, 1, 1), 126),
        ("conv", 64, 3, 1, (1, 1, 1, 1), 126),
        ("maxpool", 0, 3, 2, NO_PAD, 62),
        ("conv", 128, 3, 1, (1, 1, 1, 1), 62),
        ("conv", 128, 3, 1, (1, 1, 1, 1), 62),
        ("conv", 128, 3, 1, (1, 1, 1, 1), 62),
        ("conv", 256, 3, 1, NO_PAD, 60),
        ("conv", 256, 3, 1, NO_PAD, 58),
        ("conv", 256, 3, 1, NO_PAD, 56),
    ]
    layers = [LayerSpec(k, u, f, s, p, o) for k, u, f, s, p, o in rows]
    layers += [LayerSpec("globalpool"), LayerSpec("dense", units=1)]
    return NetworkSpec("net5_ram256", 256, tuple(layers))


def builtin_specs() -> dict[str, NetworkSpec]:
    """The named architectures shipped with the package."""
    return {
        "net5": NetworkSpec("net5", 448, _table_to_layers(448, _NET5_TABLE)),
        "net4": NetworkSpec("net4", 448, _table_to_layers(448, _NET4_TABLE)),
        "net5_ram128": _ram_variant_128(),
        "net5_ram256": _ram_variant_256(),
        "net_small": NetworkSpec("net_small", 64, _table_to_layers(64, _NET_SMALL_TABLE)),
    }


def scale_input(spec: NetworkSpec, input_size: int) -> NetworkSpec:
    """Re-derive a spec for a different input resolution.

    Filters, strides, and pads are kept; only the expected sizes are
    recomputed, so weight shapes (and therefore transferability) are
    unchanged while untied-bias shapes follow the new map sizes.
    """
    if input_size == spec.input_size:
        return spec
    layers = []
    size = input_size
    for i, l in enumerate(spec.layers):
        if l.kind in ("conv", "maxpool"):
            pt, pb, pl, pr = l.pad
            try:
                size = ad.conv_output_size(size, l.filt, l.stride, pt + pb)
            except ConfigurationError as e:
                raise ConfigurationError(f"layer {i} ({l.kind}): {e}") from e
            layers.append(replace(l, expected_size=size))
        else:
            layers.append(l)
    return NetworkSpec(f"{spec.name}@{input_size}", input_size, tuple(layers),
                       spec.in_channels)


def resolve_arch(name: str) -> NetworkSpec:
    """Look up a builtin spec; a ``name@SIZE`` suffix rescales the input."""
    base, _, res = name.partition("@")
    specs = builtin_specs()
    if base not in specs:
        raise ConfigurationError(f"unknown architecture {base!r}; have {sorted(specs)}")
    spec = specs[base]
    if res:
        spec = scale_input(spec, int(res))
    return spec


class Network:
    """A realized spec: parameter tensors plus a forward pass with cache."""

    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        spec.validate()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.sizes: list[int] = []       # per-layer output spatial size (0 after pooling head)
        self._params: list[Tensor] = []
        self._layer_params: list[Optional[tuple[Tensor, Tensor]]] = []
        self._cache: dict[str, Tensor] = {}

        size = spec.input_size
        chans = spec.in_channels
        conv_ix = 0
        for i, l in enumerate(spec.layers):
            if l.kind == "conv":
                conv_ix += 1
                pt, pb, pl, pr = l.pad
                try:
                    out = ad.conv_output_size(size, l.filt, l.stride, pt + pb)
                except ConfigurationError as e:
                    raise ConfigurationError(f"layer {i} (conv): {e}") from e
                self._check_expected(i, l, out)
                w = Tensor(np.zeros((l.units, chans, l.filt, l.filt), self.dtype),
                           requires_grad=True, name=f"conv{conv_ix}.weight")
                b = Tensor(np.zeros((l.units, out, out), self.dtype),
                           requires_grad=True, name=f"conv{conv_ix}.bias")
                self._register(w, b)
                chans, size = l.units, out
            elif l.kind == "maxpool":
                try:
                    out = ad.conv_output_size(size, l.filt, l.stride, 0)
                except ConfigurationError as e:
                    raise ConfigurationError(f"layer {i} (maxpool): {e}") from e
                self._check_expected(i, l, out)
                self._layer_params.append(None)
                size = out
            elif l.kind == "globalpool":
                self._layer_params.append(None)
                size = 0
            else:  # dense
                w = Tensor(np.zeros((1, chans), self.dtype),
                           requires_grad=True, name="dense.weight")
                b = Tensor(np.zeros((1,), self.dtype),
                           requires_grad=True, name="dense.bias")
                self._register(w, b)
            self.sizes.append(size)

    def _check_expected(self, i: int, l: LayerSpec, got: int) -> None:
        if l.expected_size is not None and got != l.expected_size:
            raise ConfigurationError(
                f"layer {i} ({l.kind}): computed output size {got} != "
                f"expected {l.expected_size}"
            )

    def _register(self, w: Tensor, b: Tensor) -> None:
        self._params += [w, b]
        self._layer_params.append((w, b))

    @property
    def k(self) -> int:
        """Feature-map count feeding the global pool (the dense input width)."""
        return self.spec.last_conv_units

    @property
    def final_map_size(self) -> int:
        """Spatial extent of the maps entering the global pool."""
        last = max(i for i, l in enumerate(self.spec.layers) if l.kind == "conv")
        return self.sizes[last]

    @property
    def head_scale(self) -> float:
        """Fixed constant folded into the output weights.

        The global pool produces plain spatial sums, whose magnitude grows
        with the map area and would force an impractically small stable
        learning rate on the output neuron. The conventional 1/(H*W)
        factor is therefore carried structurally: the stored dense
        parameter stays O(1) and the effective per-map weight is
        ``head_scale`` times it.
        """
        return 1.0 / float(self.final_map_size**2)

    @property
    def output_weights(self) -> np.ndarray:
        """Effective per-map output weights (stored parameter times scale)."""
        w, _ = self.dense_params
        return w.data[0] * self.dtype.type(self.head_scale)

    def parameters(self) -> list[Tensor]:
        return list(self._params)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self._params]

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def forward(self, x: Union[np.ndarray, Tensor]) -> Tensor:
        """Run the stack on ``[B,C,R,R]`` (or ``[C,R,R]``) input.

        Caches the activated output of the last conv layer for activation
        map extraction.
        """
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, self.dtype))
        spatial = t.shape[-1]
        if t.shape[-2] != spatial or spatial != self.spec.input_size:
            raise ConfigurationError(
                f"{self.spec.name} expects {self.spec.input_size}px square input, "
                f"got shape {t.shape}"
            )
        last_conv = None
        for i, l in enumerate(self.spec.layers):
            if l.kind == "conv":
                w, b = self._layer_params[i]
                t = ad.conv2d(t, w, b, l.stride, l.pad, name=f"layer {i} (conv)")
                t = ad.leaky_relu(t, LEAKY_SLOPE)
                last_conv = t
            elif l.kind == "maxpool":
                t = ad.maxpool(t, l.filt, l.stride, name=f"layer {i} (maxpool)")
            elif l.kind == "globalpool":
                t = ad.global_average_pool(t)
            else:
                w, b = self._layer_params[i]
                w_eff = ad.scale(w, self.head_scale)
                t = ad.dense(t, w_eff, b, name=f"layer {i} (dense)")
        self._cache = {"last_conv": last_conv, "output": t}
        return t

    __call__ = forward

    @property
    def last_conv_activation(self) -> Tensor:
        if "last_conv" not in self._cache:
            raise ad.UsageError("no forward pass cached yet")
        return self._cache["last_conv"]

    @property
    def dense_params(self) -> tuple[Tensor, Tensor]:
        return self._layer_params[-1]

    def set_arrays(self, arrays: list[np.ndarray]) -> None:
        if len(arrays) != len(self._params):
            raise ConfigurationError(
                f"{self.spec.name}: expected {len(self._params)} parameter arrays, "
                f"got {len(arrays)}"
            )
        for p, a in zip(self._params, arrays):
            if a.shape != p.data.shape:
                raise ConfigurationError(
                    f"parameter {p.name}: stored shape {a.shape} != built {p.data.shape}"
                )
            p.data = a.astype(self.dtype)

    def get_arrays(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self._params]


def build(spec: NetworkSpec, dtype=np.float32) -> Network:
    """Realize a spec; output sizes are verified against the spec exactly."""
    return Network(spec, dtype=dtype)


def init_orthogonal(network: Network, seed: int) -> Network:
    """Orthogonal weight init; biases start at zero.

    Each conv weight reshaped to (C_out, C_in*f*f) gets orthonormal rows
    (or columns when C_out exceeds the fan-in); the dense row is drawn
    the same way, which for a single output neuron means a unit-norm
    vector. Orthogonality is undefined for bias vectors, so those are
    zeroed.
    """
    rng = np.random.default_rng(seed)
    for p in network.parameters():
        if p.name.endswith(".bias"):
            p.data = np.zeros_like(p.data)
            continue
        m = p.data.shape[0]
        n = p.data.size // m
        a = rng.standard_normal((max(m, n), min(m, n)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))        # fix signs so the draw is unique
        w = q.T if m <= n else q
        p.data = np.ascontiguousarray(w.reshape(p.data.shape), dtype=network.dtype)
    return network


@dataclass
class CheckpointMeta:
    epochs: int = 0
    seed: int = 0
    resolution: int = 0
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.25, 0.25, 0.25)


@dataclass
class Checkpoint:
    """A spec plus its flat parameter arrays, in layer order."""

    spec: NetworkSpec
    arrays: list[np.ndarray] = field(default_factory=list)
    meta: CheckpointMeta = field(default_factory=CheckpointMeta)

    @classmethod
    def from_network(cls, network: Network, meta: Optional[CheckpointMeta] = None) -> "Checkpoint":
        meta = meta or CheckpointMeta(resolution=network.spec.input_size)
        arrays = [a.astype("<f4") for a in network.get_arrays()]
        return cls(network.spec, arrays, meta)

    def to_network(self, dtype=np.float32) -> Network:
        net = build(self.spec, dtype=dtype)
        net.set_arrays(self.arrays)
        return net

    def param_entries(self) -> list[tuple[str, str, np.ndarray]]:
        """(name, layer kind, array) triples in layer order."""
        net_shapes = _param_layout(self.spec)
        return [(name, kind, arr) for (name, kind, _), arr in zip(net_shapes, self.arrays)]


def _param_layout(spec: NetworkSpec) -> list[tuple[str, str, tuple[int, ...]]]:
    """Parameter (name, kind, shape) list derived from the spec alone."""
    out: list[tuple[str, str, tuple[int, ...]]] = []
    size = spec.input_size
    chans = spec.in_channels
    conv_ix = 0
    for l in spec.layers:
        if l.kind == "conv":
            conv_ix += 1
            pt, pb, _, _ = l.pad
            size = ad.conv_output_size(size, l.filt, l.stride, pt + pb)
            out.append((f"conv{conv_ix}.weight", "conv", (l.units, chans, l.filt, l.filt)))
            out.append((f"conv{conv_ix}.bias", "conv", (l.units, size, size)))
            chans = l.units
        elif l.kind == "maxpool":
            size = ad.conv_output_size(size, l.filt, l.stride, 0)
        elif l.kind == "dense":
            out.append(("dense.weight", "dense", (1, chans)))
            out.append(("dense.bias", "dense", (1,)))
    return out


def _spec_to_header(spec: NetworkSpec, meta: CheckpointMeta) -> bytes:
    doc = {
        "name": spec.name,
        "input_size": spec.input_size,
        "in_channels": spec.in_channels,
        "layers": [
            [l.kind, l.units, l.filt, l.stride, list(l.pad),
             -1 if l.expected_size is None else l.expected_size]
            for l in spec.layers
        ],
        "meta": {
            "epochs": meta.epochs,
            "seed": meta.seed,
            "resolution": meta.resolution,
            "mean": [float(v) for v in meta.mean],
            "std": [float(v) for v in meta.std],
        },
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _header_to_spec(blob: bytes) -> tuple[NetworkSpec, CheckpointMeta]:
    doc = json.loads(blob.decode("utf-8"))
    layers = tuple(
        LayerSpec(kind, units, filt, stride, tuple(pad), None if size < 0 else size)
        for kind, units, filt, stride, pad, size in doc["layers"]
    )
    spec = NetworkSpec(doc["name"], doc["input_size"], layers, doc["in_channels"])
    m = doc["meta"]
    meta = CheckpointMeta(m["epochs"], m["seed"], m["resolution"],
                          tuple(m["mean"]), tuple(m["std"]))
    return spec, meta


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the binary checkpoint format.

    Layout: magic ``RAMN`` | u32 version | u32 header length | header JSON
    (fields in the order name, input_size, in_channels, layers, meta; each
    layer as [kind, units, filter, stride, [top,bottom,left,right], size])
    | the parameter arrays as raw little-endian float32, in layer order
    (per conv: weight then bias; then dense weight, dense bias). All
    multi-byte integers are little-endian. Saving the same checkpoint
    twice produces byte-identical files.
    """
    header = _spec_to_header(ckpt.spec, ckpt.meta)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in ckpt.arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    spec, meta = _header_to_spec(blob[12 : 12 + hlen])
    offset = 12 + hlen
    arrays = []
    for name, _, shape in _param_layout(spec):
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise ConfigurationError(f"{path}: truncated parameter data at {name}")
        arrays.append(np.frombuffer(blob, "<f4", count, offset).reshape(shape).copy())
        offset = end
    if offset != len(blob):
        raise ConfigurationError(f"{path}: {len(blob) - offset} trailing bytes")
    return Checkpoint(spec, arrays, meta)


@dataclass
class TransferReport:
    copied: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)   # (name, reason)

    def summary(self) -> str:
        lines = [f"copied {len(self.copied)} tensors, skipped {len(self.skipped)}"]
        lines += [f"  + {name}" for name in self.copied]
        lines += [f"  - {name}: {why}" for name, why in self.skipped]
        return "\n".join(lines)


def transfer_weights(source: Checkpoint, target: Network) -> tuple[Network, TransferReport]:
    """Copy source parameters into ``target`` where layer kind and shape agree.

    Layers are matched by ordinal within their kind (i-th conv to i-th
    conv, dense to dense); weight and bias are copied independently on an
    exact shape match. Conv weights therefore survive a change of input
    resolution while untied biases, whose shape tracks the map size, are
    skipped and keep their fresh values.
    """
    report = TransferReport()
    src_by_name = {name: arr for name, _, arr in source.param_entries()}
    tgt_params = {p.name: p for p in target.parameters()}
    for name, _, shape in _param_layout(target.spec):
        arr = src_by_name.get(name)
        if arr is None:
            report.skipped.append((name, "no matching source layer"))
        elif arr.shape != shape:
            report.skipped.append((name, f"source shape {arr.shape} != {shape}"))
        else:
            tgt_params[name].data = arr.astype(target.dtype)
            report.copied.append(name)
    return target, report


def count_parameters(network: Network) -> int:
    """Exact count of weight entries, untied bias entries, and dense terms."""
    return sum(p.size for p in network.parameters())


def layer_table(network: Network) -> list[dict]:
    """Per-layer inspection rows: kind, config, output size, parameter count."""
    rows = []
    for i, l in enumerate(network.spec.layers):
        entry = {
            "index": i,
            "kind": l.kind,
            "units": l.units or "",
            "filter": l.filt or "",
            "stride": l.stride if l.kind in ("conv", "maxpool") else "",
            "size": network.sizes[i] or "",
            "params": 0,
        }
        lp = network._layer_params[i]
        if lp is not None:
            entry["params"] = lp[0].size + lp[1].size
        rows.append(entry)
    return rows
