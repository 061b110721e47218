"""Network definitions as declarative layer stacks over the tensor engine.

A ModelSpec is a list of LayerSpec entries plus an input shape; build_model
turns it into a Model holding named parameter tensors and BatchNorm running
statistics.  The five builders at the bottom produce the generator, triplet
encoder, Wasserstein critic, and the two convolutional classifiers.

input_gradient() expresses the gradient of a feed-forward critic with respect
to its input as an explicit graph over the same parameter tensors, so the
gradient-penalty term stays differentiable w.r.t. the critic weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

from . import tensor as T
from .tensor import SecondOrderUnsupportedError, Tensor

LAYER_KINDS = (
    "fully_connected",
    "conv1d",
    "batch_norm",
    "dropout",
    "activation",
    "l2_normalize",
    "reshape",
    "sampling",
)


class ArchitectureError(ValueError):
    """A layer stack is internally inconsistent or unreachable."""


@dataclass
class LayerSpec:
    kind: str
    units: int | None = None
    filters: int | None = None
    kernel: int | None = None
    stride: int = 1
    padding: str | int = "same"
    activation: str = ""
    slope: float = 0.0
    rate: float = 0.0
    use_bias: bool = True
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        if self.units is not None and self.units < 1:
            raise ArchitectureError(f"units must be >= 1, got {self.units}")
        if self.filters is not None and self.filters < 1:
            raise ArchitectureError(f"filters must be >= 1, got {self.filters}")
        if self.kernel is not None and self.kernel < 1:
            raise ArchitectureError(f"kernel must be >= 1, got {self.kernel}")
        if not 0.0 <= self.rate < 1.0:
            raise ArchitectureError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.shape is not None:
            self.shape = tuple(int(s) for s in self.shape)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v not in (None, "")}


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple[int, ...]
    layers: list[LayerSpec]
    mode: str = "train"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.mode not in ("train", "infer"):
            raise ArchitectureError(f"mode must be train or infer, got {self.mode!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "mode": self.mode,
            "meta": dict(self.meta),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = []
        for entry in d["layers"]:
            entry = dict(entry)
            if "shape" in entry and entry["shape"] is not None:
                entry["shape"] = tuple(entry["shape"])
            layers.append(LayerSpec(**entry))
        return cls(
            name=d["name"],
            input_shape=tuple(d["input_shape"]),
            layers=layers,
            mode=d.get("mode", "train"),
            meta=dict(d.get("meta", {})),
        )


def _resolve_reshape(in_shape: tuple[int, ...], target: tuple[int, ...]) -> tuple[int, ...]:
    total = int(np.prod(in_shape))
    if -1 in target:
        known = int(np.prod([s for s in target if s != -1]))
        if known == 0 or total % known:
            raise ArchitectureError(f"cannot reshape {in_shape} into {target}")
        target = tuple(total // known if s == -1 else s for s in target)
    if int(np.prod(target)) != total:
        raise ArchitectureError(f"cannot reshape {in_shape} into {target}")
    return target


class Model:
    """A built layer stack: parameter tensors, running stats, and forward()."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        self.spec = spec
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._shapes: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        shape = spec.input_shape
        for idx, layer in enumerate(spec.layers):
            in_shape = shape
            tag = f"{idx:02d}.{layer.kind}"
            if layer.kind == "fully_connected":
                if len(shape) != 1:
                    raise ArchitectureError(f"{spec.name}[{idx}]: fully_connected needs flat input, got {shape}")
                self._add_weight(f"{tag}.weight", _glorot((shape[0], layer.units), rng))
                if layer.use_bias:
                    self._add_weight(f"{tag}.bias", np.zeros(layer.units))
                shape = (layer.units,)
            elif layer.kind == "sampling":
                if len(shape) != 1:
                    raise ArchitectureError(f"{spec.name}[{idx}]: sampling needs flat input, got {shape}")
                for head in ("mean", "spread"):
                    self._add_weight(f"{tag}.{head}_weight", _glorot((shape[0], layer.units), rng))
                    self._add_weight(f"{tag}.{head}_bias", np.zeros(layer.units))
                shape = (layer.units,)
            elif layer.kind == "conv1d":
                if len(shape) != 2:
                    raise ArchitectureError(f"{spec.name}[{idx}]: conv1d needs (length, channels) input, got {shape}")
                length, cin = shape
                self._add_weight(f"{tag}.weight", _glorot_conv((layer.kernel, cin, layer.filters), rng))
                if layer.use_bias:
                    self._add_weight(f"{tag}.bias", np.zeros(layer.filters))
                _, _, out_len = T._conv_geometry(length, layer.kernel, layer.stride, layer.padding)
                shape = (out_len, layer.filters)
            elif layer.kind == "batch_norm":
                feat = shape[-1]
                self._add_weight(f"{tag}.gamma", np.ones(feat))
                self._add_weight(f"{tag}.beta", np.zeros(feat))
                self.buffers[f"{tag}.running_mean"] = np.zeros(feat)
                self.buffers[f"{tag}.running_var"] = np.ones(feat)
            elif layer.kind == "reshape":
                shape = _resolve_reshape(shape, layer.shape)
            elif layer.kind in ("dropout", "activation", "l2_normalize"):
                pass
            else:  # unreachable; LayerSpec validates kinds
                raise ArchitectureError(f"unknown layer kind {layer.kind!r}")
            self._shapes.append((in_shape, shape))
        self.output_shape = shape

    def _add_weight(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    # ---- parameter plumbing ---------------------------------------------
    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.params.items()}
        out.update(self.buffers)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise ValueError(f"{self.spec.name}: missing parameter {name!r} in checkpoint")
            if arrays[name].shape != p.data.shape:
                raise ValueError(f"{self.spec.name}: shape mismatch for {name!r}")
            p.data = arrays[name].copy()
        for name in self.buffers:
            if name not in arrays:
                raise KeyError(f"{self.spec.name}: missing buffer {name!r} in checkpoint")
            self.buffers[name] = arrays[name].copy()

    # ---- forward ----------------------------------------------------------
    def forward(
        self,
        x,
        *,
        train: bool | None = None,
        rng: np.random.Generator | None = None,
        update_stats: bool | None = None,
        clamp_spread: bool = False,
        dropout_masks: dict[int, np.ndarray] | None = None,
    ) -> Tensor:
        """Run the stack on a batch (first axis).

        Train mode activates dropout (masks from ``dropout_masks`` or drawn
        from ``rng``) and batch statistics; infer mode is deterministic apart
        from the sampling layer, which always draws noise unless
        ``clamp_spread`` forces the spread to zero.
        """
        if train is None:
            train = self.spec.mode == "train"
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.shape[1:] != self.spec.input_shape:
            raise T.ShapeError(self.spec.name, f"expected input (batch, {self.spec.input_shape}), got {h.shape}")
        for idx, layer in enumerate(self.spec.layers):
            tag = f"{idx:02d}.{layer.kind}"
            if layer.kind == "fully_connected":
                h = h @ self.params[f"{tag}.weight"]
                if layer.use_bias:
                    h = h + self.params[f"{tag}.bias"]
            elif layer.kind == "sampling":
                mean = h @ self.params[f"{tag}.mean_weight"] + self.params[f"{tag}.mean_bias"]
                spread = h @ self.params[f"{tag}.spread_weight"] + self.params[f"{tag}.spread_bias"]
                mean = T.leaky_relu(mean, layer.slope)
                spread = T.leaky_relu(spread, layer.slope)
                if clamp_spread:
                    h = mean
                else:
                    if rng is None:
                        raise ValueError(f"{self.spec.name}: sampling layer needs rng (or clamp_spread=True)")
                    eps = rng.standard_normal(mean.shape)
                    h = mean + T.softplus(spread) * Tensor(eps)
            elif layer.kind == "conv1d":
                b = self.params.get(f"{tag}.bias") if layer.use_bias else None
                h = T.conv1d(h, self.params[f"{tag}.weight"], b, stride=layer.stride, padding=layer.padding)
            elif layer.kind == "batch_norm":
                h = T.batch_norm(
                    h,
                    self.params[f"{tag}.gamma"],
                    self.params[f"{tag}.beta"],
                    self.buffers[f"{tag}.running_mean"],
                    self.buffers[f"{tag}.running_var"],
                    train=train,
                    update_stats=update_stats if train else False,
                )
            elif layer.kind == "activation":
                h = T.relu(h) if layer.activation == "relu" else T.leaky_relu(h, layer.slope)
            elif layer.kind == "dropout":
                if train and layer.rate > 0.0:
                    mask = _dropout_mask(dropout_masks, idx, h.shape, layer.rate, rng, self.spec.name)
                    h = T.dropout(h, layer.rate, mask)
            elif layer.kind == "l2_normalize":
                h = T.l2_normalize(h, axis=1)
            elif layer.kind == "reshape":
                h = h.reshape((h.shape[0],) + self._shapes[idx][1])
        return h

    def __call__(self, x, **kwargs) -> Tensor:
        return self.forward(x, **kwargs)


def _dropout_mask(masks, idx, shape, rate, rng, name) -> np.ndarray:
    if masks is not None and idx in masks:
        return masks[idx]
    if rng is None:
        raise ValueError(f"{name}: dropout in train mode needs rng or an explicit mask")
    return (rng.random(shape) >= rate).astype(np.float64)


def _glorot(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _glorot_conv(shape: tuple[int, int, int], rng: np.random.Generator) -> np.ndarray:
    kernel, cin, cout = shape
    limit = np.sqrt(6.0 / (kernel * cin + kernel * cout))
    return rng.uniform(-limit, limit, size=shape)


def build_model(spec: ModelSpec, seed: int | np.random.Generator) -> Model:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Model(spec, rng)


# ---------------------------------------------------------------------------
# input gradient of feed-forward critics (transpose propagation)
# ---------------------------------------------------------------------------

def input_gradient(
    model: Model,
    x: np.ndarray,
    *,
    train: bool = True,
    rng: np.random.Generator | None = None,
    dropout_masks: dict[int, np.ndarray] | None = None,
) -> Tensor:
    """Gradient of the scalar critic output w.r.t. each input row.

    The forward pass runs numerically; the returned (batch, input_dim) tensor
    is built by propagating the output seed backwards through transposed
    layers, referencing the live weight tensors.  Activation and dropout
    masks enter as constants, so differentiating the result reaches the
    weights (the second-order path needed by the gradient penalty).

    Supported layer kinds: fully_connected, activation, dropout, reshape.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.shape[1:] != model.spec.input_shape:
        raise T.ShapeError(model.spec.name, f"expected input (batch, {model.spec.input_shape}), got {h.shape}")
    records: list[tuple[str, Any]] = []
    for idx, layer in enumerate(model.spec.layers):
        tag = f"{idx:02d}.{layer.kind}"
        if layer.kind == "fully_connected":
            records.append(("matmul", model.params[f"{tag}.weight"]))
            h = h @ model.params[f"{tag}.weight"].data
            if layer.use_bias:
                h = h + model.params[f"{tag}.bias"].data
        elif layer.kind == "activation":
            if layer.activation == "relu":
                deriv = (h > 0).astype(np.float64)
            else:
                deriv = np.where(h > 0, 1.0, layer.slope)
            records.append(("mask", deriv))
            h = np.where(h > 0, h, h * (0.0 if layer.activation == "relu" else layer.slope))
        elif layer.kind == "dropout":
            if train and layer.rate > 0.0:
                mask = _dropout_mask(dropout_masks, idx, h.shape, layer.rate, rng, model.spec.name)
                keep = mask / (1.0 - layer.rate)
                records.append(("mask", keep))
                h = h * keep
        elif layer.kind == "reshape":
            records.append(("reshape", h.shape))
            h = h.reshape((h.shape[0],) + model._shapes[idx][1])
        else:
            raise SecondOrderUnsupportedError(
                f"{model.spec.name}: no input-gradient rule for layer kind {layer.kind!r}"
            )
    if h.shape[1:] not in ((), (1,)):
        raise T.ShapeError("input_gradient", f"critic output must be scalar per sample, got {h.shape}")

    g: Tensor = Tensor(np.ones(h.shape))
    for op, payload in reversed(records):
        if op == "matmul":
            g = g @ T.transpose(payload)
        elif op == "mask":
            g = g * Tensor(payload)
        else:  # reshape
            g = g.reshape(payload)
    return g


# ---------------------------------------------------------------------------
# the five architectures
# ---------------------------------------------------------------------------

def build_generator(
    num_fault_classes: int,
    output_bins: int = 512,
    fc_widths: tuple[int, ...] = (32, 128, 512),
    conv_filters: tuple[int, ...] = (8, 8, 1),
    conv_kernel: int = 5,
) -> ModelSpec:
    """Signature generator: class code -> stochastic 3-dim latent -> spectrum.

    The scalar class code feeds a sampling layer (two 3-unit heads for mean
    and spread), then no-bias fully connected layers widen to ``output_bins``
    (LeakyReLU 0.001 + BatchNorm each), then conv1d layers refine the shape.
    Spread combines as softplus, so it stays positive; forcing it to zero
    makes the forward deterministic in the class code.
    """
    if num_fault_classes < 1:
        raise ArchitectureError(f"num_fault_classes must be >= 1, got {num_fault_classes}")
    if fc_widths[-1] != output_bins:
        raise ArchitectureError(
            f"widening schedule {fc_widths} does not reach output_bins={output_bins}"
        )
    if conv_filters[-1] != 1:
        raise ArchitectureError(f"final conv must emit 1 channel, got {conv_filters[-1]}")
    layers = [LayerSpec("sampling", units=3, slope=0.001)]
    for width in fc_widths:
        layers += [
            LayerSpec("fully_connected", units=width, use_bias=False),
            LayerSpec("activation", activation="leaky_relu", slope=0.001),
            LayerSpec("batch_norm"),
        ]
    layers.append(LayerSpec("reshape", shape=(output_bins, 1)))
    for filters in conv_filters:
        layers += [
            LayerSpec("conv1d", filters=filters, kernel=conv_kernel, stride=1, padding="same", use_bias=False),
            LayerSpec("activation", activation="leaky_relu", slope=0.001),
            LayerSpec("batch_norm"),
        ]
    layers.append(LayerSpec("reshape", shape=(output_bins,)))
    return ModelSpec(
        name="generator",
        input_shape=(1,),
        layers=layers,
        meta={"num_fault_classes": int(num_fault_classes), "output_bins": int(output_bins)},
    )


def build_triplet_encoder(
    input_bins: int = 512,
    widths: tuple[int, ...] = (256, 128, 64, 32, 16, 4),
) -> ModelSpec:
    """Six fully connected layers (LeakyReLU 0.1, dropout 0.4 each), final
    4-dim embedding on the unit sphere."""
    layers: list[LayerSpec] = []
    for width in widths:
        layers += [
            LayerSpec("fully_connected", units=width),
            LayerSpec("activation", activation="leaky_relu", slope=0.1),
            LayerSpec("dropout", rate=0.4),
        ]
    layers.append(LayerSpec("l2_normalize"))
    return ModelSpec(name="triplet_encoder", input_shape=(input_bins,), layers=layers)


def build_discriminator(
    input_bins: int = 512,
    widths: tuple[int, ...] = (256, 128, 64, 32, 16),
) -> ModelSpec:
    """Wasserstein critic: hidden fully connected layers with LeakyReLU 0.1
    and dropout 0.1, then a linear scalar head (no final activation)."""
    layers: list[LayerSpec] = []
    for width in widths:
        layers += [
            LayerSpec("fully_connected", units=width),
            LayerSpec("activation", activation="leaky_relu", slope=0.1),
            LayerSpec("dropout", rate=0.1),
        ]
    layers.append(LayerSpec("fully_connected", units=1))
    return ModelSpec(name="discriminator", input_shape=(input_bins,), layers=layers)


def build_aux_classifier(num_classes: int, input_bins: int = 512) -> ModelSpec:
    """Early-stopping probe: 4 conv1d layers (8 filters, kernel 3), LeakyReLU
    0.1 and dropout 0.1 each, flatten, linear head."""
    layers: list[LayerSpec] = [LayerSpec("reshape", shape=(input_bins, 1))]
    for _ in range(4):
        layers += [
            LayerSpec("conv1d", filters=8, kernel=3, stride=1, padding="same"),
            LayerSpec("activation", activation="leaky_relu", slope=0.1),
            LayerSpec("dropout", rate=0.1),
        ]
    layers += [LayerSpec("reshape", shape=(-1,)), LayerSpec("fully_connected", units=num_classes)]
    return ModelSpec(name="aux_classifier", input_shape=(input_bins,), layers=layers)


def build_eval_classifier(num_classes: int, kernel: int, input_bins: int = 512) -> ModelSpec:
    """Evaluation classifier: 3 conv1d layers (10 filters, ReLU, dropout 0.4),
    flatten, linear head.  ``kernel`` is the tuned hyperparameter (3 or 12)."""
    layers: list[LayerSpec] = [LayerSpec("reshape", shape=(input_bins, 1))]
    for _ in range(3):
        layers += [
            LayerSpec("conv1d", filters=10, kernel=kernel, stride=1, padding="same"),
            LayerSpec("activation", activation="relu"),
            LayerSpec("dropout", rate=0.4),
        ]
    layers += [LayerSpec("reshape", shape=(-1,)), LayerSpec("fully_connected", units=num_classes)]
    return ModelSpec(name="eval_classifier", input_shape=(input_bins,), layers=layers)
