"""Trainers: batch Levenberg-Marquardt, incremental gradient descent, restarts."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .network import Network, NetworkShape, error_jacobian, init_weights
from .series import Splits, SupervisedDataset

log = logging.getLogger(__name__)

STOP_MAX_EPOCHS = "max-epochs"
STOP_VALIDATION = "validation"
STOP_GRADIENT = "gradient"
STOP_MU_MAX = "mu-max"


class TrainingError(RuntimeError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch: int, row: int, loss: float):
        super().__init__(f"training diverged at pass {epoch}, row {row} (loss {loss})")
        self.epoch = epoch
        self.row = row


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "lm"
    max_epochs: int = 1000
    mu_init: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_validation_failures: int = 6
    min_gradient: float = 1e-7
    # incremental only
    learning_rate: float = 0.01
    momentum: float = 0.9
    passes: int = 100

    def __post_init__(self):
        if self.algorithm not in ("lm", "incremental"):
            raise ValueError(f"unknown training algorithm {self.algorithm!r}")
        if not (0 < self.mu_dec < 1 < self.mu_inc):
            raise ValueError("need 0 < mu_dec < 1 < mu_inc")
        if min(self.mu_init, self.mu_max, self.min_gradient) <= 0:
            raise ValueError("mu_init, mu_max and min_gradient must be positive")
        if self.max_epochs < 1 or self.passes < 1 or self.max_validation_failures < 1:
            raise ValueError("epoch, pass and failure limits must be positive")
        if self.learning_rate < 0 or not (0 <= self.momentum < 1):
            raise ValueError("need learning_rate >= 0 and 0 <= momentum < 1")


@dataclass
class TrainReport:
    epoch_history: list[tuple[float, float]] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0
    final_mu: float | None = None
    seed: int | None = None
    algorithm: str = "lm"

    @property
    def accepted_sse(self) -> list[float]:
        return [h[0] for h in self.epoch_history]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epoch_history"] = [list(h) for h in self.epoch_history]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        d = dict(d)
        d["epoch_history"] = [tuple(h) for h in d.get("epoch_history", [])]
        return cls(**d)


def _mse(network: Network, dataset: SupervisedDataset, rows: range) -> float:
    if len(rows) == 0:
        return float("nan")
    e = dataset.targets[rows.start:rows.stop] - network.forward(dataset.inputs[rows.start:rows.stop])
    return float(np.mean(e * e))


def _check_inputs(network: Network, dataset: SupervisedDataset, splits: Splits):
    if len(splits.train) == 0:
        raise TrainingError("training block is empty")
    if splits.n > len(dataset):
        raise TrainingError("splits extend past the dataset")
    if network.input_width != dataset.width:
        raise TrainingError(
            f"network takes {network.input_width} inputs but dataset rows have {dataset.width}"
        )


class _BestTracker:
    """Keeps the weights at the validation minimum and counts non-improving epochs."""

    def __init__(self, network: Network, val_mse: float):
        self.network = network
        self.val = val_mse
        self.epoch = 0
        self.failures = 0

    def update(self, epoch: int, network: Network, val_mse: float):
        if math.isnan(val_mse):
            # no validation block: the latest weights are the best ones
            self.network, self.epoch = network, epoch
        elif val_mse < self.val:
            self.network, self.val, self.epoch = network, val_mse, epoch
            self.failures = 0
        else:
            self.failures += 1


def train_lm(network: Network, dataset: SupervisedDataset, splits: Splits,
             config: TrainConfig = TrainConfig(), seed: int | None = None):
    """Batch Levenberg-Marquardt on the training block with validation early stopping.

    Each epoch solves ``(J'J + mu I) dw = -J'e`` for the error Jacobian ``J`` of
    ``e = target - output``, and keeps the step only if the training SSE drops.
    A rejected step multiplies mu by ``mu_inc`` and is retried in the same
    epoch; an accepted one multiplies it by ``mu_dec``. Training stops on the
    epoch limit, mu exceeding ``mu_max``, a gradient norm below
    ``min_gradient``, or ``max_validation_failures`` consecutive epochs without
    a new validation minimum. The weights at that minimum are returned.
    """
    _check_inputs(network, dataset, splits)
    train = splits.train
    net = network.copy()
    theta = net.get_params()
    mu = config.mu_init
    n_params = theta.size

    J, e = error_jacobian(net, dataset, train)
    sse = float(e @ e)
    val = _mse(net, dataset, splits.val)
    report = TrainReport(epoch_history=[(sse / len(train), val)], seed=seed, algorithm="lm")
    best = _BestTracker(net, val)
    stop = STOP_MAX_EPOCHS

    for epoch in range(1, config.max_epochs + 1):
        g = J.T @ e
        if float(np.linalg.norm(g)) < config.min_gradient:
            stop = STOP_GRADIENT
            break
        JtJ = J.T @ J
        accepted = False
        while mu <= config.mu_max:
            try:
                factor = cho_factor(JtJ + mu * np.eye(n_params), lower=True, check_finite=True)
                step = -cho_solve(factor, g)
            except (LinAlgError, ValueError):
                mu *= config.mu_inc
                continue
            candidate = net.with_params(theta + step)
            J_new, e_new = error_jacobian(candidate, dataset, train)
            sse_new = float(e_new @ e_new)
            if np.isfinite(sse_new) and sse_new < sse:
                net, theta, J, e, sse = candidate, theta + step, J_new, e_new, sse_new
                mu *= config.mu_dec
                accepted = True
                break
            mu *= config.mu_inc
        if not accepted:
            stop = STOP_MU_MAX
            break
        val = _mse(net, dataset, splits.val)
        report.epoch_history.append((sse / len(train), val))
        best.update(epoch, net, val)
        if best.failures >= config.max_validation_failures:
            stop = STOP_VALIDATION
            break

    report.stop_reason = stop
    report.best_epoch = best.epoch
    report.final_mu = mu
    log.debug("lm stopped after %d epochs: %s (best epoch %d)",
              len(report.epoch_history) - 1, stop, best.epoch)
    return best.network.copy(), report


def train_incremental(network: Network, dataset: SupervisedDataset, splits: Splits,
                      config: TrainConfig = TrainConfig(algorithm="incremental"),
                      seed: int | None = None):
    """Per-row gradient descent with momentum (weights change after every row).

    For each pass over the training rows in order, the update for one row is
    ``dw = momentum * dw_prev - learning_rate * grad`` where ``grad`` is the
    gradient of that row's squared error. The weights after the pass with the
    lowest validation MSE are returned.
    """
    _check_inputs(network, dataset, splits)
    net = network.copy()
    theta = net.get_params()
    velocity = np.zeros_like(theta)
    train = splits.train
    val = _mse(net, dataset, splits.val)
    report = TrainReport(epoch_history=[(_mse(net, dataset, train), val)], seed=seed,
                         algorithm="incremental")
    best = _BestTracker(net, val)
    for p in range(1, config.passes + 1):
        for r in train:
            J, e = error_jacobian(net, dataset, range(r, r + 1))
            loss = float(e[0] * e[0])
            if not np.isfinite(loss):
                raise DivergenceError(p, r, loss)
            grad = 2.0 * e[0] * J[0]
            velocity = config.momentum * velocity - config.learning_rate * grad
            theta = theta + velocity
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(p, r, float("inf"))
            net = net.with_params(theta)
        train_mse = _mse(net, dataset, train)
        if not np.isfinite(train_mse):
            raise DivergenceError(p, train.stop - 1, train_mse)
        val = _mse(net, dataset, splits.val)
        report.epoch_history.append((train_mse, val))
        best.update(p, net, val)
    report.stop_reason = STOP_MAX_EPOCHS
    report.best_epoch = best.epoch
    return best.network.copy(), report


def train(network, dataset, splits, config: TrainConfig = TrainConfig(), seed=None):
    if config.algorithm == "lm":
        return train_lm(network, dataset, splits, config, seed)
    return train_incremental(network, dataset, splits, config, seed)


# --- restart protocol ------------------------------------------------------------


@dataclass
class AttemptRecord:
    attempt: int
    seed: int
    complete_mse: float
    stop_reason: str


ATTEMPT_HEADER = ("attempt", "seed", "complete_mse", "stop_reason")


def complete_mse(network: Network, dataset: SupervisedDataset) -> float:
    """Open-loop MSE over every row (train, validation and test together)."""
    e = dataset.targets - network.forward(dataset.inputs)
    return float(np.mean(e * e))


def train_with_restarts(
    shape: NetworkShape,
    dataset: SupervisedDataset,
    splits: Splits,
    config: TrainConfig = TrainConfig(),
    attempts: int = 5,
    base_seed: int = 0,
    evaluate: Callable[[Network], float] | None = None,
    **metadata,
):
    """Train ``attempts`` freshly initialized networks and keep the best.

    Attempt ``k`` (0-based) is initialized with seed ``base_seed + k``. Each
    trained network is scored by ``evaluate`` (open-loop complete MSE by
    default); the lowest score wins and ties go to the earlier attempt.
    Returns ``(network, report, attempt_log)``.
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    evaluate = evaluate or (lambda net: complete_mse(net, dataset))
    log_rows: list[AttemptRecord] = []
    best = None
    errors = []
    for k in range(attempts):
        seed = base_seed + k
        net0 = init_weights(shape, seed, **metadata)
        try:
            net, report = train(net0, dataset, splits, config, seed)
            score = float(evaluate(net))
        except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
            errors.append(exc)
            log_rows.append(AttemptRecord(k, seed, float("inf"), f"error: {exc}"))
            continue
        if not np.isfinite(score):
            score = float("inf")
        log_rows.append(AttemptRecord(k, seed, score, report.stop_reason))
        if best is None or score < best[0]:
            best = (score, net, report)
    if best is None:
        raise TrainingError(f"all {attempts} training attempts failed: {errors[-1]}")
    return best[1], best[2], log_rows


def write_attempt_log(rows: Sequence[AttemptRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ATTEMPT_HEADER)
        for r in rows:
            w.writerow([r.attempt, r.seed, repr(r.complete_mse), r.stop_reason])
