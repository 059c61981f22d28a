"""Feed-forward network with sigmoid hidden layers and a single linear output.

Parameters are flattened layer by layer; within a layer the weight matrix
comes first in row-major order (one row per neuron), then the biases. Both
the Jacobian columns and the serialized model use this order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .series import NormalizationParams, SupervisedDataset

SIGMOID = "sigmoid"
TANH = "tanh"
LINEAR = "linear"
TRANSFERS = (SIGMOID, TANH, LINEAR)

# Beyond this the logistic function is 0 or 1 to double precision.
SATURATION = 45.0
# Half-width of the input interval over which each transfer is responsive.
ACTIVE_HALF_WIDTH = {SIGMOID: 4.0, TANH: 2.0}

FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    hi = x > SATURATION
    lo = x < -SATURATION
    mid = ~(hi | lo)
    out[hi] = 1.0
    out[lo] = 0.0
    out[mid] = 1.0 / (1.0 + np.exp(-x[mid]))
    return out


def activate(kind: str, x):
    if kind == SIGMOID:
        return _sigmoid(x)
    if kind == TANH:
        return np.tanh(x)
    if kind == LINEAR:
        return np.asarray(x, dtype=float)
    raise ValueError(f"unknown transfer {kind!r}")


def activate_derivative(kind: str, output: np.ndarray) -> np.ndarray:
    """Derivative expressed through the transfer's own output."""
    if kind == SIGMOID:
        return output * (1.0 - output)
    if kind == TANH:
        return 1.0 - output * output
    if kind == LINEAR:
        return np.ones_like(output)
    raise ValueError(f"unknown transfer {kind!r}")


def transfer(kind: str, x: float) -> float:
    """Scalar transfer function: logistic sigmoid, tanh, or identity."""
    if kind == SIGMOID:
        if x > SATURATION:
            return 1.0
        if x < -SATURATION:
            return 0.0
        return 1.0 / (1.0 + math.exp(-x))
    if kind == TANH:
        return math.tanh(x)
    if kind == LINEAR:
        return float(x)
    raise ValueError(f"unknown transfer {kind!r}")


@dataclass
class Layer:
    weights: np.ndarray   # (neurons, inputs)
    biases: np.ndarray    # (neurons,)
    transfer: str = SIGMOID

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1)
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeError(
                f"weights have {self.weights.shape[0]} rows but there are {self.biases.shape[0]} biases"
            )
        if self.transfer not in TRANSFERS:
            raise ValueError(f"unknown transfer {self.transfer!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[1]

    @property
    def n_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.biases.size

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.biases.copy(), self.transfer)


def layer_forward(layer: Layer, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[-1] != layer.n_inputs:
        raise ShapeError(f"layer expects {layer.n_inputs} inputs, got {inputs.shape[-1]}")
    return activate(layer.transfer, inputs @ layer.weights.T + layer.biases)


@dataclass
class Network:
    layers: list[Layer]
    y_delays: tuple[int, ...] = (1, 2)
    x_delays: tuple[int, ...] = ()
    norm_params: dict[str, NormalizationParams] = field(default_factory=dict)
    loop_mode: str = "open"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].n_inputs != self.layers[k - 1].n_neurons:
                raise ShapeError(
                    f"layer {k} takes {self.layers[k].n_inputs} inputs but layer {k - 1} "
                    f"has {self.layers[k - 1].n_neurons} neurons"
                )
        last = self.layers[-1]
        if last.n_neurons != 1 or last.transfer != LINEAR:
            raise ShapeError("output layer must be a single linear neuron")
        if self.loop_mode not in ("open", "closed"):
            raise ValueError(f"loop_mode must be 'open' or 'closed', got {self.loop_mode!r}")
        self.y_delays = tuple(self.y_delays)
        self.x_delays = tuple(self.x_delays)

    @property
    def input_width(self) -> int:
        return self.layers[0].n_inputs

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(layer.n_neurons for layer in self.layers[:-1])

    @property
    def max_y_delay(self) -> int:
        return max(self.y_delays)

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in self.layers])

    def with_params(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {theta.shape}")
        layers, pos = [], 0
        for l in self.layers:
            w = theta[pos: pos + l.weights.size].reshape(l.weights.shape)
            pos += l.weights.size
            b = theta[pos: pos + l.n_neurons]
            pos += l.n_neurons
            layers.append(Layer(w.copy(), b.copy(), l.transfer))
        return replace(self, layers=layers)

    def copy(self) -> "Network":
        return replace(self, layers=[l.copy() for l in self.layers],
                       norm_params=dict(self.norm_params), provenance=dict(self.provenance))

    def forward(self, inputs) -> np.ndarray:
        """Batch forward pass: (rows, input_width) -> (rows,)."""
        a = np.atleast_2d(np.asarray(inputs, dtype=float))
        if a.shape[1] != self.input_width:
            raise ShapeError(f"network expects {self.input_width} inputs, got {a.shape[1]}")
        for layer in self.layers:
            a = layer_forward(layer, a)
        return a[:, 0]

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "loadcast-network",
            "version": FORMAT_VERSION,
            "input_width": self.input_width,
            "layers": [
                {"neurons": l.n_neurons, "inputs": l.n_inputs, "transfer": l.transfer}
                for l in self.layers
            ],
            "y_delays": list(self.y_delays),
            "x_delays": list(self.x_delays),
            "loop_mode": self.loop_mode,
            "parameter_order": "layer-major; weights row-major, then biases",
            "parameters": [float(v) for v in self.get_params()],
            "normalization": {k: p.to_dict() for k, p in sorted(self.norm_params.items())},
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != "loadcast-network":
            raise ValueError("not a loadcast network document")
        layers = [
            Layer(np.zeros((spec["neurons"], spec["inputs"])), np.zeros(spec["neurons"]), spec["transfer"])
            for spec in d["layers"]
        ]
        net = cls(
            layers,
            y_delays=tuple(d["y_delays"]),
            x_delays=tuple(d.get("x_delays", ())),
            norm_params={k: NormalizationParams.from_dict(v) for k, v in d.get("normalization", {}).items()},
            loop_mode=d.get("loop_mode", "open"),
            provenance=dict(d.get("provenance", {})),
        )
        return net.with_params(np.asarray(d["parameters"], dtype=float))


def network_forward(network: Network, inputs) -> float:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 1:
        raise ShapeError("network_forward takes a single input vector")
    return float(network.forward(inputs[None, :])[0])


def dumps_model(network: Network, extra: dict | None = None) -> str:
    """JSON text for a network (plus optional report sections).

    Floats are written with ``repr`` which round-trips exactly.
    """
    doc = network.to_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_model(network: Network, path, extra: dict | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_model(network, extra))


def load_model(path) -> Network:
    with open(path) as fh:
        return Network.from_dict(json.load(fh))


def load_model_document(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# --- initialization ------------------------------------------------------------


@dataclass(frozen=True)
class NetworkShape:
    input_width: int
    hidden: tuple[int, ...] = (10,)
    hidden_transfer: str = SIGMOID
    input_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.input_width < 1:
            raise ShapeError("input_width must be positive")
        if any(h < 1 for h in self.hidden):
            raise ShapeError("hidden layer sizes must be positive")
        if self.hidden_transfer not in (SIGMOID, TANH):
            raise ValueError("hidden transfer must be sigmoid or tanh")
        if not self.input_range[0] < self.input_range[1]:
            raise ShapeError("input_range must satisfy lo < hi")


def _nguyen_widrow(rng: np.random.Generator, n_neurons: int, n_inputs: int, kind: str, in_lo: float, in_hi: float):
    beta = 0.7 * n_neurons ** (1.0 / n_inputs)
    w = rng.uniform(-1.0, 1.0, size=(n_neurons, n_inputs))
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    w = beta * w / norms
    if n_neurons > 1:
        b = beta * np.linspace(-1.0, 1.0, n_neurons) * np.sign(w[:, 0])
    else:
        b = np.zeros(1)
    # w, b act on inputs centred into [-1, 1]. Shrink rows whose worst-case
    # net input would leave the responsive region of the transfer.
    reach = np.abs(w).sum(axis=1) + np.abs(b)
    limit = ACTIVE_HALF_WIDTH[kind]
    shrink = np.where(reach > limit, limit / reach, 1.0)
    w = w * shrink[:, None]
    b = b * shrink
    # Map back from the centred frame to the raw input range.
    mid = (in_lo + in_hi) / 2.0
    half = (in_hi - in_lo) / 2.0
    w_raw = w / half
    return w_raw, b - w_raw @ np.full(n_inputs, mid)


def init_weights(shape: NetworkShape, seed: int, **metadata) -> Network:
    """Nguyen-Widrow initialization for hidden layers, small uniform output weights.

    Each hidden neuron's active region is spread across the input range given
    by ``shape.input_range`` (later hidden layers see ``(0, 1)`` or
    ``(-1, 1)``, the range of the previous transfer). Deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = shape.input_width
    lo, hi = shape.input_range
    for h in shape.hidden:
        w, b = _nguyen_widrow(rng, h, fan_in, shape.hidden_transfer, lo, hi)
        layers.append(Layer(w, b, shape.hidden_transfer))
        fan_in = h
        lo, hi = (0.0, 1.0) if shape.hidden_transfer == SIGMOID else (-1.0, 1.0)
    layers.append(Layer(rng.uniform(-0.5, 0.5, size=(1, fan_in)), rng.uniform(-0.5, 0.5, size=1), LINEAR))
    return Network(layers, **metadata)


# --- Jacobian -------------------------------------------------------------------


def _forward_trace(network: Network, inputs: np.ndarray) -> list[np.ndarray]:
    acts = [inputs]
    for layer in network.layers:
        acts.append(layer_forward(layer, acts[-1]))
    return acts


def output_jacobian(network: Network, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Outputs and d(output)/d(parameter) for every row, by reverse accumulation."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != network.input_width:
        raise ShapeError(f"network expects {network.input_width} inputs, got {inputs.shape[1]}")
    acts = _forward_trace(network, inputs)
    n = inputs.shape[0]
    blocks: list[np.ndarray] = []
    delta = activate_derivative(network.layers[-1].transfer, acts[-1])   # (n, 1)
    for k in range(len(network.layers) - 1, -1, -1):
        layer = network.layers[k]
        a_in = acts[k]
        dw = (delta[:, :, None] * a_in[:, None, :]).reshape(n, -1)
        blocks.append(np.hstack([dw, delta]))
        if k:
            delta = (delta @ layer.weights) * activate_derivative(network.layers[k - 1].transfer, acts[k])
    return acts[-1][:, 0], np.hstack(blocks[::-1])


def error_jacobian(network: Network, dataset: SupervisedDataset, rows: range | slice | None = None):
    """Jacobian of the errors ``e = target - output`` with respect to every parameter.

    Returns ``(J, e)`` with ``J[r, p] = d e[r] / d p`` in the flattening order of
    :meth:`Network.get_params`.
    """
    if rows is None:
        rows = slice(None)
    elif isinstance(rows, range):
        rows = slice(rows.start, rows.stop)
    x = dataset.inputs[rows]
    t = dataset.targets[rows]
    y, jy = output_jacobian(network, x)
    return -jy, t - y
