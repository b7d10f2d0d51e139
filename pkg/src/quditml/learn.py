"""Losses, predictions, metrics, and the full-batch ADAM training loop.

Classification encodes class y as basis level y: the model probability of a
class is the squared overlap of the output state with that basis state. The
multi-class single-qubit baseline passes an explicit set of (generally
non-orthogonal) label states instead, in which case the per-class overlaps no
longer sum to one and only the overlap loss and argmax prediction are
defined.

Regression reads out the expected level index, optionally shifted to the
data range (default shift centers the [0, d-1] range at zero).

All run randomness is drawn from named counter-based streams (see
quditml.rng): parameter init, data sampling, and shot sampling never share a
stream, so sweeps are reproducible regardless of scheduling.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import circuit
from .circuit import CircuitSpec
from .qudit import QuditState
from .rng import stream

LOSSES = ("mse", "overlap")


class TrainingAborted(RuntimeError):
    """Raised when the training loss becomes non-finite; carries the epoch index."""

    def __init__(self, epoch: int, message: str):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; defaults follow the full-batch desk-scale setup."""

    seed: int
    loss: str = None  # None resolves per task: overlap for classification, mse for regression
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 2000
    init_range: tuple = (-math.pi, math.pi)
    output_shift: float = None  # regression only; None means -(d-1)/2

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        low, high = self.init_range
        if not low < high:
            raise ValueError("init_range must satisfy low < high")
        if self.loss is not None and self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES} or None")


@dataclass
class RunRecord:
    """Outcome of one training run."""

    seed: int
    final_train_loss: float
    train_metric: float
    test_metric: float
    parameters: np.ndarray
    epoch_loss_trace: np.ndarray


@dataclass
class SweepResult:
    """Per-seed records plus the percentile summary of the test metric."""

    records: list
    summary: dict


def class_probabilities(state: QuditState) -> np.ndarray:
    """Squared overlaps with each basis level; sums to one for a unit state."""
    return np.abs(state.amplitudes) ** 2


def expected_label(probs) -> float:
    """Mean level index under a probability distribution."""
    probs = _check_distribution(probs)
    return float(probs @ np.arange(probs.size))


def predict_regression(probs, shift: float) -> float:
    """Expected level index shifted into the target range."""
    return expected_label(probs) + shift


def predict_class(probs) -> int:
    """Index of the largest entry; ties resolve to the lowest index."""
    probs = np.asarray(probs, dtype=float)
    return int(np.argmax(probs))


def accuracy(predictions, labels) -> float:
    """Fraction of exact label matches."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be equal-length, non-empty")
    return float(np.mean(predictions == labels))


def mse_loss(outputs, targets) -> float:
    """Mean squared error over a batch."""
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if outputs.shape != targets.shape or outputs.size == 0:
        raise ValueError("outputs and targets must be equal-length, non-empty")
    return float(np.mean((outputs - targets) ** 2))


def overlap_loss(true_label_probs) -> float:
    """Sum of (1 - p) over the batch's true-label probabilities (not averaged)."""
    p = np.asarray(true_label_probs, dtype=float)
    if p.size == 0:
        raise ValueError("empty batch")
    if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.sum(1.0 - p))


def sample_shots(probs, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical outcome frequencies from a finite number of measurement shots."""
    probs = _check_distribution(probs)
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    return rng.multinomial(n_shots, probs) / n_shots


def _check_distribution(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size < 1:
        raise ValueError("expected a 1-d probability vector")
    if np.any(probs < -1e-12) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("entries must be a probability distribution")
    return probs


def _resolve_loss(task: str, loss):
    if loss is None:
        return "overlap" if task == "classification" else "mse"
    if task == "regression" and loss == "overlap":
        raise ValueError("overlap loss is undefined for regression tasks")
    return loss


def _resolve_shift(spec: CircuitSpec, config: TrainConfig, task: str) -> float:
    if task != "regression":
        return 0.0
    if config.output_shift is not None:
        return config.output_shift
    return -(spec.d - 1) / 2.0


def _check_frame(label_states, dim: int):
    if label_states is None:
        return None
    frame = np.asarray(label_states, dtype=complex)
    if frame.ndim != 2 or frame.shape[1] != dim:
        raise ValueError(f"label states must have shape (num_classes, {dim})")
    norms = np.sum(np.abs(frame) ** 2, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-10):
        raise ValueError("label states must be unit norm")
    return frame


def _loss_and_gradients(amps, targets, loss_name, frame, shift, num_levels):
    """Loss value and per-sample dLoss/d(conj amplitudes) rows."""
    n = amps.shape[0]
    rows = np.arange(n)
    if frame is not None:
        inner = amps @ frame.conj().T
        picked = inner[rows, targets]
        loss = float(np.sum(1.0 - np.abs(picked) ** 2))
        lgrads = -picked[:, None] * frame[targets]
        return loss, lgrads
    if loss_name == "overlap":
        picked = amps[rows, targets]
        loss = float(np.sum(1.0 - np.abs(picked) ** 2))
        lgrads = np.zeros_like(amps)
        lgrads[rows, targets] = -picked
        return loss, lgrads
    levels = np.arange(num_levels, dtype=float)
    residual = (np.abs(amps) ** 2) @ levels + shift - targets
    loss = float(np.mean(residual**2))
    lgrads = ((2.0 / n) * residual)[:, None] * levels[None, :] * amps
    return loss, lgrads


def _batch_loss(spec, params, X, targets, loss_name, frame, shift):
    amps = circuit.forward_batch(spec, params, X)
    loss, _ = _loss_and_gradients(amps, targets, loss_name, frame, shift, spec.d)
    return loss


def _metric_from_amps(amps, targets, task, frame, shift):
    if task == "classification":
        overlaps = np.abs(amps @ frame.conj().T) ** 2 if frame is not None else np.abs(amps) ** 2
        return float(np.mean(np.argmax(overlaps, axis=1) == targets))
    preds = (np.abs(amps) ** 2) @ np.arange(amps.shape[1], dtype=float) + shift
    return float(np.mean((preds - targets) ** 2))


def evaluate(spec, params, dataset, label_states=None, shift=None, shots=None, rng=None) -> float:
    """Metric of a parameter vector on a dataset: accuracy or MSE per task.

    With ``shots`` set, basis-level probabilities are replaced by empirical
    frequencies from that many measurement shots per sample (requires the
    orthogonal basis-state labels; explicit label states need full overlap
    access and reject shot estimation).
    """
    frame = _check_frame(label_states, spec.d)
    if shift is None:
        shift = -(spec.d - 1) / 2.0 if dataset.task == "regression" else 0.0
    amps = circuit.forward_batch(spec, params, dataset.inputs)
    if shots is None:
        return _metric_from_amps(amps, dataset.targets, dataset.task, frame, shift)
    if frame is not None:
        raise ValueError("shot estimation is only defined for orthogonal basis-state labels")
    if rng is None:
        raise ValueError("shot estimation requires an rng stream")
    freqs = rng.multinomial(int(shots), np.abs(amps) ** 2) / float(shots)
    if dataset.task == "classification":
        return float(np.mean(np.argmax(freqs, axis=1) == dataset.targets))
    preds = freqs @ np.arange(spec.d, dtype=float) + shift
    return float(np.mean((preds - dataset.targets) ** 2))


def train(spec: CircuitSpec, train_set, config: TrainConfig, test_set=None, label_states=None) -> RunRecord:
    """Full-batch ADAM descent; returns the best-loss parameters along the way.

    The loss trace records the training loss at the start of every epoch.
    The returned parameters are the post-step iterate with the lowest
    recorded loss (the final iterate is also evaluated), so late-training
    oscillation cannot degrade the reported metrics.
    """
    X = train_set.inputs
    targets = train_set.targets
    task = train_set.task
    loss_name = _resolve_loss(task, config.loss)
    frame = _check_frame(label_states, spec.d)
    if frame is not None:
        if task != "classification":
            raise ValueError("explicit label states require a classification task")
        if loss_name != "overlap":
            raise ValueError("non-orthogonal label states only support the overlap loss")
        n_classes = frame.shape[0]
    else:
        n_classes = spec.d
    if task == "classification" and (np.min(targets) < 0 or np.max(targets) >= n_classes):
        raise ValueError(f"classification labels must lie in 0..{n_classes - 1}")
    shift = _resolve_shift(spec, config, task)

    rng = stream(config.seed, "init")
    params = rng.uniform(config.init_range[0], config.init_range[1], circuit.param_count(spec))
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    b1, b2 = config.beta1, config.beta2
    lr, eps = config.learning_rate, config.epsilon

    trace = np.empty(config.epochs)
    best_loss = np.inf
    best_params = None
    for epoch in range(config.epochs):
        amps, cache = circuit.forward_with_cache(spec, params, X)
        loss, lgrads = _loss_and_gradients(amps, targets, loss_name, frame, shift, spec.d)
        if not np.isfinite(loss):
            raise TrainingAborted(epoch, "training loss became non-finite")
        trace[epoch] = loss
        if epoch >= 1 and loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        grad = circuit.gradient_from_cache(spec, params, X, cache, lgrads)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** (epoch + 1))
        v_hat = v / (1.0 - b2 ** (epoch + 1))
        params = params - lr * m_hat / (np.sqrt(v_hat) + eps)

    final_loss = _batch_loss(spec, params, X, targets, loss_name, frame, shift)
    if np.isfinite(final_loss) and final_loss < best_loss:
        best_loss = final_loss
        best_params = params
    if best_params is None:
        raise TrainingAborted(config.epochs, "no finite post-step loss was recorded")

    train_metric = _metric_from_amps(
        circuit.forward_batch(spec, best_params, X), targets, task, frame, shift
    )
    test_metric = None
    if test_set is not None:
        test_metric = _metric_from_amps(
            circuit.forward_batch(spec, best_params, test_set.inputs),
            test_set.targets,
            task,
            frame,
            shift,
        )
    return RunRecord(
        seed=config.seed,
        final_train_loss=float(best_loss),
        train_metric=train_metric,
        test_metric=test_metric,
        parameters=best_params,
        epoch_loss_trace=trace,
    )


def percentile_summary(values) -> dict:
    """min / p25 / median / p75 / max with linear interpolation between order stats."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to summarize")
    qs = np.percentile(arr, [0, 25, 50, 75, 100])
    return {
        "count": int(arr.size),
        "min": float(qs[0]),
        "p25": float(qs[1]),
        "median": float(qs[2]),
        "p75": float(qs[3]),
        "max": float(qs[4]),
    }


def sweep(spec, dataset_factory, config: TrainConfig, seeds, label_states=None) -> SweepResult:
    """Independent training runs over seeds with per-run re-sampled data.

    ``dataset_factory(rng)`` must return a (train, test) pair drawn from the
    run's data stream, and ``spec`` may be a callable ``spec(rng)`` drawing
    per-run structure (e.g. a fresh encoding permutation) from the same
    stream, in a fixed order: spec first, then datasets.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    records = []
    for seed in seeds:
        data_rng = stream(seed, "data")
        run_spec = spec(data_rng) if callable(spec) else spec
        train_set, test_set = dataset_factory(data_rng)
        records.append(train(run_spec, train_set, replace(config, seed=seed), test_set, label_states))
    metrics = [r.test_metric if r.test_metric is not None else r.train_metric for r in records]
    return SweepResult(records=records, summary=percentile_summary(metrics))
