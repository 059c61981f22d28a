"""Open-loop and closed-loop simulation, plus the MSE and R metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, ShapeError
from .series import NormalizationParams, Splits, SupervisedDataset

PREDICTION_HEADER = ("INDEX", "TARGET", "OUTPUT", "SPLIT")
SPLIT_LABELS = ("train", "val", "test", "sim")


class MetricError(ValueError):
    pass


class UndefinedCorrelationError(MetricError):
    pass


@dataclass
class Prediction:
    indices: np.ndarray
    targets: np.ndarray
    outputs: np.ndarray
    labels: list[str]
    scale: str = "normalized"

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        self.labels = list(self.labels)
        n = len(self.indices)
        if not (len(self.targets) == len(self.outputs) == len(self.labels) == n):
            raise ValueError("prediction columns must have equal length")
        bad = set(self.labels) - set(SPLIT_LABELS)
        if bad:
            raise ValueError(f"unknown split labels {sorted(bad)}")

    def __len__(self):
        return len(self.indices)

    def select(self, label: str) -> "Prediction":
        mask = np.asarray([l == label for l in self.labels], dtype=bool)
        return Prediction(self.indices[mask], self.targets[mask], self.outputs[mask],
                          [label] * int(mask.sum()), self.scale)

    def to_original_scale(self, params: NormalizationParams) -> "Prediction":
        if self.scale == "original":
            return self
        return Prediction(self.indices, params.invert(self.targets), params.invert(self.outputs),
                          self.labels, "original")


def _labels(n: int, splits: Splits | None) -> list[str]:
    if splits is None:
        return ["sim"] * n
    if splits.n != n:
        raise ValueError(f"splits cover {splits.n} rows but the prediction has {n}")
    return splits.labels()


def simulate_open_loop(network: Network, dataset: SupervisedDataset, splits: Splits | None = None) -> Prediction:
    """One-step-ahead prediction: every row uses the recorded past values."""
    if network.input_width != dataset.width:
        raise ShapeError(f"network takes {network.input_width} inputs, dataset rows have {dataset.width}")
    outputs = network.forward(dataset.inputs) if len(dataset) else np.zeros(0)
    return Prediction(dataset.target_indices, dataset.targets, outputs, _labels(len(dataset), splits))


def closed_loop_outputs(network: Network, priming, steps: int, exogenous=None) -> np.ndarray:
    """Iterate the network on its own predictions.

    The history starts as ``priming``; step ``s`` predicts position
    ``len(priming) + s`` from history values at that position minus each y
    delay. ``exogenous`` (when the network has x delays) is indexed by the same
    positions, i.e. it is aligned with ``priming`` followed by the predicted
    steps, and always supplies recorded values.
    """
    priming = np.asarray(priming, dtype=float)
    p = len(priming)
    if p < network.max_y_delay:
        raise ValueError(f"priming needs {network.max_y_delay} values, got {p}")
    if steps < 1:
        raise ValueError("steps must be positive")
    y_delays = np.asarray(network.y_delays)
    x_delays = np.asarray(network.x_delays, dtype=int)
    if len(x_delays):
        if exogenous is None:
            raise ValueError("network has exogenous inputs but no exogenous series was given")
        exogenous = np.asarray(exogenous, dtype=float)
        if len(exogenous) < p + steps - min(x_delays):
            raise ValueError(
                f"exogenous series has {len(exogenous)} rows, needs {p + steps - min(x_delays)}"
            )
        if max(x_delays) > p:
            raise ValueError("x delays reach before the start of the priming window")
    elif exogenous is not None:
        raise ValueError("exogenous series given but the network has no x delays")
    hist = np.empty(p + steps)
    hist[:p] = priming
    row = np.empty(network.input_width)
    ny = len(y_delays)
    for s in range(steps):
        t = p + s
        row[:ny] = hist[t - y_delays]
        if len(x_delays):
            row[ny:] = exogenous[t - x_delays]
        hist[t] = network.forward(row[None, :])[0]
    return hist[p:]


def simulate_closed_loop(network: Network, priming, steps: int, exogenous=None,
                         targets=None, indices=None, splits: Splits | None = None) -> Prediction:
    """Closed-loop simulation wrapped as a :class:`Prediction`.

    ``targets``/``indices`` default to NaN and ``0..steps-1`` when no recorded
    values exist for the simulated horizon.
    """
    outputs = closed_loop_outputs(network, priming, steps, exogenous)
    if targets is None:
        targets = np.full(steps, np.nan)
    if indices is None:
        indices = np.arange(steps)
    return Prediction(indices, targets, outputs, _labels(steps, splits))


def simulate_closed_loop_dataset(network: Network, series_values, dataset: SupervisedDataset,
                                 exogenous=None, splits: Splits | None = None) -> Prediction:
    """Closed-loop run over the same rows as ``dataset``.

    Primed once with the recorded values preceding the first target, then
    runs on its own predictions to the end of the series.
    """
    values = np.asarray(series_values, dtype=float)
    start = dataset.max_delay
    priming = values[:start]
    return simulate_closed_loop(network, priming, len(dataset), exogenous,
                                dataset.targets, dataset.target_indices, splits)


def mse(targets, outputs) -> float:
    t = np.asarray(targets, dtype=float)
    a = np.asarray(outputs, dtype=float)
    if t.shape != a.shape:
        raise MetricError(f"length mismatch: {t.shape} vs {a.shape}")
    if t.size == 0:
        raise MetricError("mse of an empty sequence")
    d = t - a
    return float(np.mean(d * d))


def corr_r(targets, outputs) -> float:
    """Pearson correlation between targets and outputs."""
    t = np.asarray(targets, dtype=float)
    a = np.asarray(outputs, dtype=float)
    if t.shape != a.shape:
        raise MetricError(f"length mismatch: {t.shape} vs {a.shape}")
    if t.size < 2:
        raise MetricError("correlation needs at least two points")
    dt = t - t.mean()
    da = a - a.mean()
    st = float(np.sqrt(dt @ dt))
    sa = float(np.sqrt(da @ da))
    if st == 0.0 or sa == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    r = float(dt @ da) / (st * sa)
    return max(-1.0, min(1.0, r))


def write_prediction(prediction: Prediction, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(PREDICTION_HEADER) + "\n")
        for i, t, o, s in zip(prediction.indices.tolist(), prediction.targets.tolist(),
                              prediction.outputs.tolist(), prediction.labels):
            fh.write(f"{i}\t{t!r}\t{o!r}\t{s}\n")


def read_prediction(path, scale: str = "normalized") -> Prediction:
    idx, tgt, out, lab = [], [], [], []
    with open(path) as fh:
        header = tuple(fh.readline().rstrip("\n").split("\t"))
        if header != PREDICTION_HEADER:
            raise ValueError(f"{path}: not a prediction file (header {header})")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 columns")
            idx.append(int(parts[0]))
            tgt.append(float(parts[1]))
            out.append(float(parts[2]))
            lab.append(parts[3])
    return Prediction(np.asarray(idx, dtype=np.int64), np.asarray(tgt), np.asarray(out), lab, scale)
