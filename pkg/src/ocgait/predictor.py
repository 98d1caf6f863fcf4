"""Feed-forward predictor of obstacle-crossing joint trajectories.

Inputs: resampled sound-ankle height curve, resampled pre-cycle thigh
angles, and the subject's leg length. Outputs: thigh and knee angle curves
over the crossing cycle, each ``trajectory_len`` samples.

Layers are plain dense maps plus an attention-weighting layer: a learned
softmax gate over positions, scaled by the layer width so zero logits are
an exact pass-through. Training is mini-batch gradient descent on MSE with
z-scored inputs/targets and early stopping on a held-out validation split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetTooSmall, InvalidConfig, SchemaError, ShapeMismatch
from .gait_data import GaitTrajectory, StrideSegments, resample, round_half_up, segment_stride

WEIGHTS_FORMAT = "ocgait-weights"
WEIGHTS_VERSION = 1
ANKLE_FEATURES = 50
PRE_ANGLE_FEATURES = 20

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (
        lambda z: 1.0 / (1.0 + np.exp(-z)),
        lambda z: (s := 1.0 / (1.0 + np.exp(-z))) * (1.0 - s),
    ),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}

LAYER_KINDS = ("dense", "attention")
ACTIVATION_NAMES = tuple(_ACTIVATIONS)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    activation: str = "identity"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidConfig(f"unknown layer kind {self.kind!r}")
        if self.width < 1:
            raise InvalidConfig("layer width must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate <= 0.8:
            raise InvalidConfig("dropout_rate outside [0, 0.8]")


@dataclass(frozen=True)
class NetworkSpec:
    input_width: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_width < 1:
            raise InvalidConfig("input_width must be >= 1")
        if len(self.layers) < 1:
            raise InvalidConfig("need at least one layer")

    @property
    def output_width(self) -> int:
        return self.layers[-1].width


@dataclass(frozen=True)
class TrainConfig:
    validation_fraction: float = 0.35
    patience_epochs: int = 60
    max_epochs: int = 300
    learning_rate: float = 0.05
    batch_size: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidConfig("validation_fraction must be in (0, 1)")
        if self.patience_epochs < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("patience, max_epochs, batch_size must be >= 1")
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be nonnegative")


@dataclass(frozen=True, eq=False)
class PredictionPair:
    thigh_pred: np.ndarray
    knee_pred: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "thigh_pred", np.asarray(self.thigh_pred, dtype=np.float64))
        object.__setattr__(self, "knee_pred", np.asarray(self.knee_pred, dtype=np.float64))
        if len(self.thigh_pred) != len(self.knee_pred):
            raise InvalidConfig("thigh and knee predictions must have equal length")
        if not (np.all(np.isfinite(self.thigh_pred)) and np.all(np.isfinite(self.knee_pred))):
            raise InvalidConfig("predictions must be finite")


class Network:
    """Weights plus input/output standardization for one NetworkSpec."""

    def __init__(self, spec: NetworkSpec, trajectory_len: int, params: list[dict] | None = None):
        if spec.output_width != 2 * trajectory_len:
            raise InvalidConfig(
                f"output width {spec.output_width} != 2 * trajectory_len ({2 * trajectory_len})"
            )
        self.spec = spec
        self.trajectory_len = trajectory_len
        self.params = params if params is not None else []
        self.x_mean = np.zeros(spec.input_width)
        self.x_std = np.ones(spec.input_width)
        self.y_mean = np.zeros(spec.output_width)
        self.y_std = np.ones(spec.output_width)

    def copy_params(self) -> list[dict]:
        return [{k: v.copy() for k, v in layer.items()} for layer in self.params]

    def set_params(self, params: list[dict]) -> None:
        self.params = [{k: v.copy() for k, v in layer.items()} for layer in params]

    def parameter_count(self) -> int:
        return int(sum(v.size for layer in self.params for v in layer.values()))


def init_network(spec: NetworkSpec, trajectory_len: int, seed: int = 0) -> Network:
    """He-scaled dense weights (Xavier for saturating activations), zero
    gates for attention layers so they start as identity maps."""
    rng = np.random.default_rng(seed)
    net = Network(spec, trajectory_len)
    fan_in = spec.input_width
    for layer in spec.layers:
        if layer.kind == "dense":
            scale = np.sqrt(2.0 / fan_in) if layer.activation == "relu" else np.sqrt(1.0 / fan_in)
            net.params.append(
                {
                    "W": rng.normal(0.0, scale, size=(layer.width, fan_in)),
                    "b": np.zeros(layer.width),
                }
            )
            fan_in = layer.width
        else:
            net.params.append({"theta": np.zeros(fan_in)})
    return net


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def _forward_batch(net: Network, X: np.ndarray, train: bool = False, rng=None):
    """Returns (output, caches); dropout only when train=True and rate > 0."""
    A = X
    caches = []
    for layer, params in zip(net.spec.layers, net.params):
        if layer.kind == "dense":
            Z = A @ params["W"].T + params["b"]
            act, _ = _ACTIVATIONS[layer.activation]
            out = act(Z)
            mask = None
            if train and layer.dropout_rate > 0.0:
                keep = 1.0 - layer.dropout_rate
                mask = (rng.random(out.shape) < keep) / keep
                out = out * mask
            caches.append({"X": A, "Z": Z, "mask": mask})
            A = out
        else:
            s = _softmax(params["theta"])
            d = len(params["theta"])
            caches.append({"X": A, "s": s, "d": d})
            A = d * s * A
    return A, caches


def _backward_batch(net: Network, caches: list[dict], dOut: np.ndarray) -> list[dict]:
    grads: list[dict] = [None] * len(net.params)
    dA = dOut
    for idx in range(len(net.params) - 1, -1, -1):
        layer = net.spec.layers[idx]
        cache = caches[idx]
        if layer.kind == "dense":
            if cache["mask"] is not None:
                dA = dA * cache["mask"]
            _, dact = _ACTIVATIONS[layer.activation]
            dZ = dA * dact(cache["Z"])
            grads[idx] = {"W": dZ.T @ cache["X"], "b": dZ.sum(axis=0)}
            dA = dZ @ net.params[idx]["W"]
        else:
            s, d, X = cache["s"], cache["d"], cache["X"]
            g = (dA * X).sum(axis=0)
            grads[idx] = {"theta": d * s * (g - np.sum(g * s))}
            dA = d * s * dA
    return grads


def loss_and_grads(net: Network, X: np.ndarray, Y: np.ndarray, train: bool = False, rng=None):
    """Mean squared error over all outputs plus parameter gradients."""
    out, caches = _forward_batch(net, X, train=train, rng=rng)
    diff = out - Y
    loss = float(np.mean(diff**2))
    dOut = 2.0 * diff / diff.size
    return loss, _backward_batch(net, caches, dOut)


def evaluate_loss(net: Network, X: np.ndarray, Y: np.ndarray) -> float:
    out, _ = _forward_batch(net, X, train=False)
    return float(np.mean((out - Y) ** 2))


def forward(net: Network, x) -> PredictionPair:
    """Inference on one feature vector; dropout disabled."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != net.spec.input_width:
        raise ShapeMismatch(f"expected input of width {net.spec.input_width}, got {x.shape}")
    xn = (x - net.x_mean) / net.x_std
    out, _ = _forward_batch(net, xn[None, :], train=False)
    y = out[0] * net.y_std + net.y_mean
    L = net.trajectory_len
    return PredictionPair(thigh_pred=y[:L], knee_pred=y[L:])


def train(net: Network, dataset, cfg: TrainConfig):
    """Gradient-descent training with early stopping.

    ``dataset`` is an (X, Y) pair of arrays. Stops after
    ``patience_epochs`` epochs without validation improvement and returns
    the network restored to the best validation snapshot, plus the history
    of (train_loss, val_loss) per epoch.
    """
    X, Y = dataset
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) < 10:
        raise DatasetTooSmall(f"need >= 10 examples, got {len(X)}")
    rng = np.random.default_rng(cfg.rng_seed)

    n_val = max(1, round_half_up(cfg.validation_fraction * len(X)))
    perm = rng.permutation(len(X))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]

    net.x_mean = X[tr_idx].mean(axis=0)
    net.x_std = np.maximum(X[tr_idx].std(axis=0), 1e-8)
    net.y_mean = Y[tr_idx].mean(axis=0)
    net.y_std = np.maximum(Y[tr_idx].std(axis=0), 1e-8)
    Xn = (X - net.x_mean) / net.x_std
    Yn = (Y - net.y_mean) / net.y_std

    best_val = np.inf
    best_params = net.copy_params()
    bad_epochs = 0
    history: list[tuple[float, float]] = []
    for _epoch in range(cfg.max_epochs):
        order = rng.permutation(tr_idx)
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(net, Xn[batch], Yn[batch], train=True, rng=rng)
            batch_losses.append(loss)
            for params, grad in zip(net.params, grads):
                for key in params:
                    params[key] -= cfg.learning_rate * grad[key]
        val_loss = evaluate_loss(net, Xn[val_idx], Yn[val_idx])
        history.append((float(np.mean(batch_losses)), val_loss))
        if np.isfinite(val_loss) and val_loss < best_val:
            best_val = val_loss
            best_params = net.copy_params()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= cfg.patience_epochs:
            break
    net.set_params(best_params)
    return net, history


def adjust_swing(pred: PredictionPair, boundary_knee_deg: float) -> PredictionPair:
    """Shift the knee curve so it starts at the measured cycle-entry knee
    angle; the shift decays linearly to zero over the first 20% of samples."""
    knee = pred.knee_pred.copy()
    delta = float(boundary_knee_deg) - knee[0]
    k = round_half_up(0.2 * len(knee))
    if k > 0 and delta != 0.0:
        j = np.arange(k)
        knee[:k] += delta * (1.0 - j / k)
    return PredictionPair(thigh_pred=pred.thigh_pred.copy(), knee_pred=knee)


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass(frozen=True, eq=False)
class StrideExample:
    """One training/evaluation stride: features plus resampled truth curves."""

    features: np.ndarray
    thigh_true: np.ndarray
    knee_true: np.ndarray
    span_s: float
    boundary_knee_deg: float


def stride_features(segments: StrideSegments, leg_length_cm: float) -> np.ndarray:
    return np.concatenate(
        [
            resample(segments.ankle_height, ANKLE_FEATURES),
            resample(segments.pre_angle, PRE_ANGLE_FEATURES),
            [leg_length_cm / 100.0],
        ]
    )


def input_width() -> int:
    return ANKLE_FEATURES + PRE_ANGLE_FEATURES + 1


def example_from_trajectory(
    traj: GaitTrajectory, cycle_start_hint: int | None = None, trajectory_len: int = 100
) -> StrideExample:
    if cycle_start_hint is None:
        cycle_start_hint = len(traj) // 2
    segs = segment_stride(traj, cycle_start_hint)
    span_s = (segs.indices[1] - segs.indices[0]) / traj.rate_hz
    return StrideExample(
        features=stride_features(segs, traj.subject.leg_length_cm),
        thigh_true=resample(segs.thigh, trajectory_len),
        knee_true=resample(segs.knee, trajectory_len),
        span_s=span_s,
        boundary_knee_deg=float(segs.knee[0]),
    )


def build_examples(trajs, trajectory_len: int = 100) -> list[StrideExample]:
    return [example_from_trajectory(t, trajectory_len=trajectory_len) for t in trajs]


def example_arrays(examples) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([e.features for e in examples])
    Y = np.stack([np.concatenate([e.thigh_true, e.knee_true]) for e in examples])
    return X, Y


def predict_stride(net: Network, traj: GaitTrajectory, cycle_start_hint: int | None = None):
    """Feature extraction, inference, and swing adjustment for one session."""
    example = example_from_trajectory(traj, cycle_start_hint, net.trajectory_len)
    pred = forward(net, example.features)
    return adjust_swing(pred, example.boundary_knee_deg), example


# ---------------------------------------------------------------------------
# Persistence


def save_weights(net: Network, path) -> None:
    payload = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "trajectory_len": net.trajectory_len,
        "input_width": net.spec.input_width,
        "layers": [
            {
                "kind": l.kind,
                "width": l.width,
                "activation": l.activation,
                "dropout_rate": l.dropout_rate,
            }
            for l in net.spec.layers
        ],
        "normalization": {
            "x_mean": net.x_mean.tolist(),
            "x_std": net.x_std.tolist(),
            "y_mean": net.y_mean.tolist(),
            "y_std": net.y_std.tolist(),
        },
        "params": [{k: v.tolist() for k, v in layer.items()} for layer in net.params],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_weights(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"weights file is not valid JSON: {exc}") from exc
    if payload.get("format") != WEIGHTS_FORMAT:
        raise SchemaError("not a weights file")
    if payload.get("version") != WEIGHTS_VERSION:
        raise SchemaError(f"unsupported weights version {payload.get('version')}")
    spec = NetworkSpec(
        input_width=payload["input_width"],
        layers=tuple(
            LayerSpec(
                kind=l["kind"],
                width=l["width"],
                activation=l["activation"],
                dropout_rate=l["dropout_rate"],
            )
            for l in payload["layers"]
        ),
    )
    net = Network(spec, payload["trajectory_len"])
    net.params = [
        {k: np.asarray(v, dtype=np.float64) for k, v in layer.items()}
        for layer in payload["params"]
    ]
    norm = payload["normalization"]
    net.x_mean = np.asarray(norm["x_mean"], dtype=np.float64)
    net.x_std = np.asarray(norm["x_std"], dtype=np.float64)
    net.y_mean = np.asarray(norm["y_mean"], dtype=np.float64)
    net.y_std = np.asarray(norm["y_std"], dtype=np.float64)
    return net


def save_spec(spec: NetworkSpec, path) -> None:
    payload = {
        "input_width": spec.input_width,
        "layers": [
            {
                "kind": l.kind,
                "width": l.width,
                "activation": l.activation,
                "dropout_rate": l.dropout_rate,
            }
            for l in spec.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_spec(path, default_input_width: int | None = None) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"spec file is not valid JSON: {exc}") from exc
    if "layers" not in payload:
        raise SchemaError("spec file missing 'layers'")
    width = payload.get("input_width", default_input_width)
    if width is None:
        raise SchemaError("spec file missing 'input_width'")
    return NetworkSpec(
        input_width=int(width),
        layers=tuple(
            LayerSpec(
                kind=l["kind"],
                width=l["width"],
                activation=l.get("activation", "identity"),
                dropout_rate=l.get("dropout_rate", 0.0),
            )
            for l in payload["layers"]
        ),
    )


def save_prediction(pred: PredictionPair, path, duration_s: float) -> None:
    """Two-column CSV for predicted trajectories (estimate subcommand input)."""
    lines = [f"# duration_s=%.9g" % duration_s, "thigh_pred_deg,knee_pred_deg"]
    for th, kn in zip(pred.thigh_pred, pred.knee_pred):
        lines.append("%.9g,%.9g" % (th, kn))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_prediction(path) -> tuple[PredictionPair, float | None]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    duration = None
    rows = []
    saw_header = False
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("duration_s="):
                duration = float(body.split("=", 1)[1])
            continue
        if not saw_header:
            if stripped != "thigh_pred_deg,knee_pred_deg":
                raise SchemaError("expected header thigh_pred_deg,knee_pred_deg")
            saw_header = True
            continue
        parts = stripped.split(",")
        if len(parts) != 2:
            raise SchemaError(f"line {lineno}: expected 2 fields")
        rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise SchemaError("prediction file has no data rows")
    arr = np.asarray(rows)
    return PredictionPair(thigh_pred=arr[:, 0], knee_pred=arr[:, 1]), duration
