"""Neural meta-model predicting intermediate measures from design vectors.

A small fully connected trunk feeds two branches, one for the 162 flux-map
values and one for the three scalar measures.  Training is plain
minibatch gradient descent with per-parameter adaptive step sizes
(first/second-moment estimates), all in float64 numpy so runs are exactly
reproducible and gradients can be checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import machine_model, postprocess
from .design_space import DesignSpec
from .machine_model import (
    FLUX_VALUES,
    GRID_POINTS,
    IntermediateMeasures,
    MEASURE_VALUES,
    SCALAR_VALUES,
)

INPUT_DIM = 14
TRUNK_WIDTH = 64
HEAD_WIDTH = 32

MIN_TRAIN_RECORDS = 10
STD_FLOOR = 1e-12
PSI_REF_FLOOR = 1e-6

MODEL_MAGIC = b"DVMM"
MODEL_VERSION = 1

_PARAM_ORDER = ("w1", "b1", "w2", "b2", "wf1", "bf1", "wf2", "bf2",
                "ws1", "bs1", "ws2", "bs2")


class TooFewSamples(ValueError):
    """Training requires at least MIN_TRAIN_RECORDS records."""


class ModelFormatError(RuntimeError):
    """Model file is corrupt, truncated or structurally wrong."""


class ModelVersionError(ModelFormatError):
    """Model file was written by an incompatible format version."""


@dataclass
class Dataset:
    """Design vectors paired with flattened measure vectors.

    ``targets`` rows follow the canonical 165-value layout of
    ``IntermediateMeasures.to_vector``.
    """

    designs: np.ndarray    # (n, 14)
    targets: np.ndarray    # (n, 165)
    spec: DesignSpec

    def __len__(self) -> int:
        return len(self.designs)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.designs[idx], self.targets[idx], self.spec)

    def measures(self, i: int) -> IntermediateMeasures:
        return IntermediateMeasures.from_vector(self.targets[i])


def build_dataset(designs, spec: DesignSpec, evaluator=None) -> Dataset:
    """Evaluate every design with the reference model (or a stand-in)."""
    if evaluator is None:
        evaluator = machine_model.evaluate_measures
    rows = [np.asarray(v, dtype=float) for v in designs]
    if not rows:
        return Dataset(np.empty((0, spec.n_dims)), np.empty((0, MEASURE_VALUES)), spec)
    targets = np.stack([evaluator(v).to_vector() for v in rows])
    return Dataset(np.stack(rows), targets, spec)


@dataclass
class Scaler:
    """Min-max input scaling by design bounds; z-score output scaling fitted
    on the training split (std floored at STD_FLOOR)."""

    in_lo: np.ndarray
    in_range: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    @classmethod
    def fit(cls, spec: DesignSpec, train_targets: np.ndarray) -> "Scaler":
        lo = spec.lower_bounds()
        rng = spec.upper_bounds() - lo
        mean = train_targets.mean(axis=0)
        std = np.maximum(train_targets.std(axis=0), STD_FLOOR)
        return cls(in_lo=lo, in_range=rng, out_mean=mean, out_std=std)

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.in_lo) / self.in_range

    def inverse_x(self, xs: np.ndarray) -> np.ndarray:
        return xs * self.in_range + self.in_lo

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.out_mean) / self.out_std

    def inverse_y(self, ys: np.ndarray) -> np.ndarray:
        return ys * self.out_std + self.out_mean


@dataclass
class TrainConfig:
    seed: int
    max_epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2
    patience: int | None = 50     # epochs without val improvement; None disables

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MetaModel:
    """Trunk-plus-two-branch network weights, scaler and training metadata."""

    params: dict[str, np.ndarray]
    scaler: Scaler
    metadata: dict = field(default_factory=dict)

    def forward(self, x_std: np.ndarray) -> np.ndarray:
        """Standardized outputs (n, 165) for standardized inputs (n, 14)."""
        p = self.params
        h1 = np.tanh(x_std @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        hf = np.tanh(h2 @ p["wf1"] + p["bf1"])
        yf = hf @ p["wf2"] + p["bf2"]
        hs = np.tanh(h2 @ p["ws1"] + p["bs1"])
        ys = hs @ p["ws2"] + p["bs2"]
        return np.concatenate([yf, ys], axis=1)


def init_params(rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, drawn in
    a fixed order so a seed pins the initialization."""
    shapes = {
        "w1": (INPUT_DIM, TRUNK_WIDTH),
        "w2": (TRUNK_WIDTH, TRUNK_WIDTH),
        "wf1": (TRUNK_WIDTH, HEAD_WIDTH),
        "wf2": (HEAD_WIDTH, FLUX_VALUES),
        "ws1": (TRUNK_WIDTH, HEAD_WIDTH),
        "ws2": (HEAD_WIDTH, SCALAR_VALUES),
    }
    params: dict[str, np.ndarray] = {}
    for name in ("w1", "w2", "wf1", "wf2", "ws1", "ws2"):
        fan_in, fan_out = shapes[name]
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-a, a, shapes[name])
        params["b" + name[1:]] = np.zeros(fan_out)
    return params


def loss_and_gradients(params: dict[str, np.ndarray], x_std: np.ndarray,
                       y_std: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Equal-weighted MSE of the two branches plus its analytic gradient.

    loss = 0.5 * mean((flux_pred - flux)^2) + 0.5 * mean((scal_pred - scal)^2)
    with means over batch x branch outputs.
    """
    n = len(x_std)
    h1 = np.tanh(x_std @ params["w1"] + params["b1"])
    h2 = np.tanh(h1 @ params["w2"] + params["b2"])
    hf = np.tanh(h2 @ params["wf1"] + params["bf1"])
    yf = hf @ params["wf2"] + params["bf2"]
    hs = np.tanh(h2 @ params["ws1"] + params["bs1"])
    ys = hs @ params["ws2"] + params["bs2"]

    tf = y_std[:, :FLUX_VALUES]
    ts = y_std[:, FLUX_VALUES:]
    ef = yf - tf
    es = ys - ts
    loss = 0.5 * float(np.mean(ef**2)) + 0.5 * float(np.mean(es**2))

    gf = ef / (n * FLUX_VALUES)          # d loss / d yf
    gs = es / (n * SCALAR_VALUES)

    grads: dict[str, np.ndarray] = {}
    grads["wf2"] = hf.T @ gf
    grads["bf2"] = gf.sum(axis=0)
    dhf = (gf @ params["wf2"].T) * (1.0 - hf**2)
    grads["wf1"] = h2.T @ dhf
    grads["bf1"] = dhf.sum(axis=0)

    grads["ws2"] = hs.T @ gs
    grads["bs2"] = gs.sum(axis=0)
    dhs = (gs @ params["ws2"].T) * (1.0 - hs**2)
    grads["ws1"] = h2.T @ dhs
    grads["bs1"] = dhs.sum(axis=0)

    dh2 = (dhf @ params["wf1"].T + dhs @ params["ws1"].T) * (1.0 - h2**2)
    grads["w2"] = h1.T @ dh2
    grads["b2"] = dh2.sum(axis=0)
    dh1 = (dh2 @ params["w2"].T) * (1.0 - h1**2)
    grads["w1"] = x_std.T @ dh1
    grads["b1"] = dh1.sum(axis=0)
    return loss, grads


def _branch_loss(pred_std: np.ndarray, y_std: np.ndarray) -> float:
    ef = pred_std[:, :FLUX_VALUES] - y_std[:, :FLUX_VALUES]
    es = pred_std[:, FLUX_VALUES:] - y_std[:, FLUX_VALUES:]
    return 0.5 * float(np.mean(ef**2)) + 0.5 * float(np.mean(es**2))


def train(ds: Dataset, cfg: TrainConfig) -> MetaModel:
    """Fit the meta-model; returns the weights with the best validation loss.

    Deterministic given (dataset, config): initialization, the train/val
    split and the shuffling stream all derive from ``cfg.seed``.  With
    ``validation_fraction == 0`` the training set doubles as validation
    (useful for capacity checks).
    """
    n = len(ds)
    if n < MIN_TRAIN_RECORDS:
        raise TooFewSamples(f"need >= {MIN_TRAIN_RECORDS} records, got {n}")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) < MIN_TRAIN_RECORDS:
        raise TooFewSamples(
            f"need >= {MIN_TRAIN_RECORDS} training records after the "
            f"validation split, got {len(train_idx)}")

    scaler = Scaler.fit(ds.spec, ds.targets[train_idx])
    x_train = scaler.transform_x(ds.designs[train_idx])
    y_train = scaler.transform_y(ds.targets[train_idx])
    if n_val:
        x_val = scaler.transform_x(ds.designs[val_idx])
        y_val = scaler.transform_y(ds.targets[val_idx])
    else:
        x_val, y_val = x_train, y_train

    params = init_params(rng)
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0

    model = MetaModel(params=params, scaler=scaler)
    best_val = _branch_loss(model.forward(x_val), y_val)
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    since_best = 0
    train_loss = float("nan")

    n_train = len(train_idx)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(params, x_train[batch], y_train[batch])
            epoch_loss += loss * len(batch)
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for k, g in grads.items():
                m_state[k] = cfg.beta1 * m_state[k] + (1.0 - cfg.beta1) * g
                v_state[k] = cfg.beta2 * v_state[k] + (1.0 - cfg.beta2) * g**2
                params[k] -= cfg.learning_rate * (m_state[k] / bc1) / (
                    np.sqrt(v_state[k] / bc2) + cfg.eps)
        train_loss = epoch_loss / n_train

        val_loss = _branch_loss(model.forward(x_val), y_val)
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
        if cfg.patience is not None and since_best >= cfg.patience:
            break

    final_val = _branch_loss(model.forward(x_val), y_val)
    model.params = best_params
    model.metadata = {
        "seed": cfg.seed,
        "epochs_run": epoch,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "final_val_loss": final_val,
        "final_train_loss": train_loss,
        "n_train": int(n_train),
        "n_val": int(n_val),
    }
    return model


def predict_vector(model: MetaModel, v: np.ndarray) -> np.ndarray:
    """Raw 165-value prediction for one design, after structural repair."""
    x = model.scaler.transform_x(np.asarray(v, dtype=float)[None, :])
    y = model.scaler.inverse_y(model.forward(x))[0]
    y[FLUX_VALUES] = max(y[FLUX_VALUES], 0.0)          # c_hy
    y[FLUX_VALUES + 1] = max(y[FLUX_VALUES + 1], 0.0)  # c_ed
    y[FLUX_VALUES + 2] = max(y[FLUX_VALUES + 2], PSI_REF_FLOOR)
    # psi_q is identically zero at zero q-current.
    n = GRID_POINTS * GRID_POINTS
    y[n:2 * n].reshape(GRID_POINTS, GRID_POINTS)[:, 0] = 0.0
    return y


def predict(model: MetaModel, v: np.ndarray) -> IntermediateMeasures:
    """Meta-model stand-in for the reference evaluator."""
    return IntermediateMeasures.from_vector(predict_vector(model, v))


def _r2(pred: np.ndarray, true: np.ndarray) -> float:
    """Variance-weighted multi-output R^2 (per-column centering), so a
    predictor of the per-output mean scores ~0 regardless of how much
    variance the output layout itself carries."""
    pred = pred.reshape(len(pred), -1)
    true = true.reshape(len(true), -1)
    ss_res = float(np.sum((pred - true)**2))
    ss_tot = float(np.sum((true - true.mean(axis=0))**2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


def _mape(pred: np.ndarray, true: np.ndarray) -> float:
    mask = np.abs(true) > 1e-12
    if not mask.any():
        return 0.0
    return float(np.mean(np.abs(pred[mask] - true[mask]) / np.abs(true[mask])))


def evaluate_model(model: MetaModel, ds: Dataset, with_kpis: bool = True) -> dict:
    """R^2 and MAPE per output group, plus KPI-level metrics.

    The flux grids are pooled into one group; the scalar outputs are
    reported individually.  KPI metrics push both measure sources through
    the shared physics post-processing.
    """
    if len(ds) == 0:
        raise ValueError("empty evaluation split")
    pred = np.stack([predict_vector(model, v) for v in ds.designs])
    true = ds.targets

    metrics: dict = {
        "flux": {"r2": _r2(pred[:, :FLUX_VALUES], true[:, :FLUX_VALUES]),
                 "mape": _mape(pred[:, :FLUX_VALUES], true[:, :FLUX_VALUES])},
        "scalars": {"r2": _r2(pred[:, FLUX_VALUES:], true[:, FLUX_VALUES:]),
                    "mape": _mape(pred[:, FLUX_VALUES:], true[:, FLUX_VALUES:])},
    }
    for j, name in enumerate(("c_hy", "c_ed", "psi_ref")):
        col = FLUX_VALUES + j
        metrics[name] = {"r2": _r2(pred[:, col], true[:, col]),
                         "mape": _mape(pred[:, col], true[:, col])}

    if with_kpis:
        k_pred = np.empty((len(ds), 2))
        k_true = np.empty((len(ds), 2))
        for i, v in enumerate(ds.designs):
            mp = IntermediateMeasures.from_vector(pred[i])
            mt = IntermediateMeasures.from_vector(true[i])
            k_pred[i], _ = postprocess.evaluate_kpis(v, mp, ds.spec.limits)
            k_true[i], _ = postprocess.evaluate_kpis(v, mt, ds.spec.limits)
        for j, name in enumerate(("max_power", "cost")):
            metrics["kpi_" + name] = {
                "r2": _r2(k_pred[:, j], k_true[:, j]),
                "mape": _mape(k_pred[:, j], k_true[:, j]),
            }
    return metrics


def save(model: MetaModel, path) -> None:
    """Versioned binary container: magic, JSON header, raw float64 buffers."""
    arrays: list[tuple[str, np.ndarray]] = []
    for name in _PARAM_ORDER:
        arrays.append((name, model.params[name]))
    for name in ("in_lo", "in_range", "out_mean", "out_std"):
        arrays.append(("scaler." + name, getattr(model.scaler, name)))

    header = {
        "version": MODEL_VERSION,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "metadata": model.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load(path) -> MetaModel:
    """Inverse of ``save``; validates magic, version and buffer sizes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a meta-model file")
    off = len(MODEL_MAGIC)
    if len(raw) < off + 8:
        raise ModelFormatError(f"{path}: truncated header")
    hlen = int.from_bytes(raw[off:off + 8], "little")
    off += 8
    if len(raw) < off + hlen:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + hlen])
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: bad header ({e})") from e
    off += hlen
    if header.get("version") != MODEL_VERSION:
        raise ModelVersionError(
            f"{path}: format version {header.get('version')!r}, "
            f"expected {MODEL_VERSION}")

    values: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape)) if shape else 8
        if len(raw) < off + nbytes:
            raise ModelFormatError(
                f"{path}: truncated buffer for {entry['name']} "
                f"(need {nbytes} bytes)")
        values[entry["name"]] = np.frombuffer(
            raw[off:off + nbytes], dtype="<f8").reshape(shape).copy()
        off += nbytes
    if off != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - off} trailing bytes")

    try:
        params = {n: values[n] for n in _PARAM_ORDER}
        scaler = Scaler(
            in_lo=values["scaler.in_lo"], in_range=values["scaler.in_range"],
            out_mean=values["scaler.out_mean"], out_std=values["scaler.out_std"])
    except KeyError as e:
        raise ModelFormatError(f"{path}: missing array {e}") from e
    return MetaModel(params=params, scaler=scaler,
                     metadata=header.get("metadata", {}))
