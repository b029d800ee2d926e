"""Dense multi-layer perceptron with hand-written backpropagation.

Parameters of one worker are a list of flat ``float64`` vectors, one per
layer, laid out as the row-major ``(input_dim, output_dim)`` weight matrix
followed by the ``output_dim`` biases.  Keeping every layer as a single
vector is what lets the consensus engine exchange and penalise layers
independently.

The loss is selected by the last layer's activation: ``SOFTMAX_OUTPUT``
gives mean cross-entropy over integer class labels, ``IDENTITY`` gives mean
squared error over real targets (the convex least-squares test mode).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError, UsageError

__all__ = [
    "Activation",
    "InitScheme",
    "LayerSpec",
    "MiniBatch",
    "mlp_spec",
    "linear_spec",
    "validate_spec",
    "param_counts",
    "init_params",
    "forward_loss",
    "grad",
    "loss_and_grad",
    "predict",
    "accuracy",
]


class Activation(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX_OUTPUT = "softmax"


class InitScheme(str, enum.Enum):
    ZEROS = "zeros"
    SMALL_UNIFORM = "small_uniform"


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation = Activation.RELU

    @property
    def n_weights(self) -> int:
        return self.input_dim * self.output_dim

    @property
    def n_params(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


class MiniBatch(NamedTuple):
    inputs: np.ndarray
    labels: np.ndarray


# Desk-scale MNIST network: 784-256-128-64-32-16-10, 244,890 parameters.
MLP_DIMS = (784, 256, 128, 64, 32, 16, 10)


def mlp_spec(dims: Sequence[int] = MLP_DIMS) -> list[LayerSpec]:
    """ReLU MLP with a softmax output layer over ``dims[-1]`` classes."""
    if len(dims) < 2:
        raise ConfigurationError("an MLP needs at least an input and an output dimension")
    n = len(dims) - 1
    return [
        LayerSpec(dims[i], dims[i + 1],
                  Activation.SOFTMAX_OUTPUT if i == n - 1 else Activation.RELU)
        for i in range(n)
    ]


def linear_spec(feature_dim: int, output_dim: int = 1) -> list[LayerSpec]:
    """Single affine layer trained with squared error."""
    return [LayerSpec(feature_dim, output_dim, Activation.IDENTITY)]


def validate_spec(spec: Sequence[LayerSpec]) -> None:
    if not spec:
        raise ConfigurationError("model spec has no layers")
    for i, layer in enumerate(spec):
        if layer.input_dim < 1 or layer.output_dim < 1:
            raise ConfigurationError(f"layer {i} has non-positive dimensions")
        if i + 1 < len(spec) and layer.output_dim != spec[i + 1].input_dim:
            raise ConfigurationError(
                f"layer {i} outputs {layer.output_dim} but layer {i + 1} expects "
                f"{spec[i + 1].input_dim}"
            )
        if layer.activation is Activation.SOFTMAX_OUTPUT and i != len(spec) - 1:
            raise ConfigurationError("only the last layer may be a softmax output")
    if spec[-1].activation is Activation.RELU:
        raise ConfigurationError("last layer must be a softmax output or identity")


def param_counts(spec: Sequence[LayerSpec]) -> list[int]:
    return [layer.n_params for layer in spec]


def is_classifier(spec: Sequence[LayerSpec]) -> bool:
    return spec[-1].activation is Activation.SOFTMAX_OUTPUT


def init_params(spec: Sequence[LayerSpec], seed: int = 0,
                scheme: InitScheme | str = InitScheme.SMALL_UNIFORM) -> list[np.ndarray]:
    """Create one parameter vector per layer.

    ``SMALL_UNIFORM`` draws weights from U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
    with zero biases; ``ZEROS`` returns all-zero vectors.
    """
    validate_spec(spec)
    scheme = InitScheme(scheme)
    if scheme is InitScheme.ZEROS:
        return [np.zeros(layer.n_params) for layer in spec]
    rng = np.random.default_rng(seed)
    params = []
    for layer in spec:
        bound = 1.0 / np.sqrt(layer.input_dim)
        w = rng.uniform(-bound, bound, size=layer.n_weights)
        params.append(np.concatenate([w, np.zeros(layer.output_dim)]))
    return params


def _unpack(layer: LayerSpec, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = vec[: layer.n_weights].reshape(layer.input_dim, layer.output_dim)
    return w, vec[layer.n_weights:]


def _check(spec, params, inputs) -> None:
    if len(params) != len(spec):
        raise ShapeError(f"expected {len(spec)} parameter vectors, got {len(params)}")
    for i, (layer, vec) in enumerate(zip(spec, params)):
        if np.shape(vec) != (layer.n_params,):
            raise ShapeError(f"layer {i}: expected {layer.n_params} parameters, got {np.shape(vec)}")
    if inputs.ndim != 2 or inputs.shape[1] != spec[0].input_dim:
        raise ShapeError(f"inputs of shape {inputs.shape} do not match input_dim {spec[0].input_dim}")


def _forward(spec, params, inputs):
    """Return the per-layer inputs and the final pre-activation output."""
    acts = [inputs]
    h = inputs
    for i, (layer, vec) in enumerate(zip(spec, params)):
        w, b = _unpack(layer, vec)
        z = h @ w + b
        if i == len(spec) - 1:
            return acts, z
        h = np.maximum(z, 0.0) if layer.activation is Activation.RELU else z
        acts.append(h)
    raise AssertionError("unreachable")


def _targets(spec, labels, n):
    if is_classifier(spec):
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ShapeError(f"expected {n} class labels, got shape {labels.shape}")
        if n and (labels.min() < 0 or labels.max() >= spec[-1].output_dim):
            raise ShapeError("class label out of range")
        return labels.astype(np.intp)
    y = np.asarray(labels, dtype=float).reshape(n, -1)
    if y.shape[1] != spec[-1].output_dim:
        raise ShapeError(f"targets have {y.shape[1]} columns, model outputs {spec[-1].output_dim}")
    return y


def _loss_from_output(spec, out, y):
    """Mean loss and its gradient with respect to the output pre-activation."""
    n = out.shape[0]
    if is_classifier(spec):
        shifted = out - out.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        total = exp.sum(axis=1, keepdims=True)
        log_probs = shifted - np.log(total)
        loss = -log_probs[np.arange(n), y].mean()
        dout = exp / total
        dout[np.arange(n), y] -= 1.0
        return loss, dout / n
    resid = out - y
    return np.sum(resid * resid) / n, 2.0 * resid / n


def forward_loss(spec: Sequence[LayerSpec], params: Sequence[np.ndarray], batch: MiniBatch) -> float:
    inputs = np.asarray(batch.inputs, dtype=float)
    _check(spec, params, inputs)
    if inputs.shape[0] < 1:
        raise ShapeError("empty batch")
    y = _targets(spec, batch.labels, inputs.shape[0])
    _, out = _forward(spec, params, inputs)
    return float(_loss_from_output(spec, out, y)[0])


def loss_and_grad(spec: Sequence[LayerSpec], params: Sequence[np.ndarray],
                  batch: MiniBatch) -> tuple[float, list[np.ndarray]]:
    inputs = np.asarray(batch.inputs, dtype=float)
    _check(spec, params, inputs)
    if inputs.shape[0] < 1:
        raise ShapeError("empty batch")
    y = _targets(spec, batch.labels, inputs.shape[0])
    acts, out = _forward(spec, params, inputs)
    loss, delta = _loss_from_output(spec, out, y)

    grads: list[np.ndarray] = [None] * len(spec)  # type: ignore[list-item]
    for i in range(len(spec) - 1, -1, -1):
        layer = spec[i]
        h_in = acts[i]
        grads[i] = np.concatenate([(h_in.T @ delta).ravel(), delta.sum(axis=0)])
        if i > 0:
            w, _ = _unpack(layer, params[i])
            delta = delta @ w.T
            if spec[i - 1].activation is Activation.RELU:
                # h_in is the ReLU output, zero exactly where the unit was inactive
                delta = delta * (h_in > 0.0)
    return float(loss), grads


def grad(spec: Sequence[LayerSpec], params: Sequence[np.ndarray], batch: MiniBatch) -> list[np.ndarray]:
    return loss_and_grad(spec, params, batch)[1]


def predict(spec: Sequence[LayerSpec], params: Sequence[np.ndarray], inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    _check(spec, params, inputs)
    _, out = _forward(spec, params, inputs)
    return out


def accuracy(spec: Sequence[LayerSpec], params: Sequence[np.ndarray], testset) -> float:
    """Fraction of samples whose argmax output equals the label.

    Ties resolve to the lowest class index.
    """
    inputs = np.asarray(testset.inputs, dtype=float)
    if inputs.shape[0] == 0:
        raise UsageError("accuracy needs a non-empty test set")
    if not is_classifier(spec):
        raise UsageError("accuracy is defined for classification models only")
    labels = _targets(spec, testset.labels, inputs.shape[0])
    out = predict(spec, params, inputs)
    return float(np.mean(np.argmax(out, axis=1) == labels))
