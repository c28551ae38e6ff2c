"""Decay-replay state sampling and the next-activity classifier.

Every place carries a decay value: it jumps to beta when a token enters and
ramps linearly down to zero over that place's horizon. Replaying a trace and
snapshotting (decay vector, per-place token-entry counts, marking) right
before each firing yields timed state samples labeled with the upcoming
activity; one extra sample per trace is labeled END. A small fully connected
network (tanh hidden layers, softmax output, hand-rolled backprop) trained on
these samples predicts the next activity — the token-entry counts are what
let it separate loop-continue from loop-exit states that share a marking.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .logs import EventLog
from .petri import LabeledPetriNet, fire, hidden_path_to_enable

log = logging.getLogger(__name__)

END_LABEL = "END"


class PredictorError(Exception):
    pass


# -- decay state -----------------------------------------------------------------

@dataclass
class DecayConfig:
    """Per-place decay parameters: initial activation and ramp horizons (s)."""

    beta: float = 1.0
    horizons: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.horizons = np.asarray(self.horizons, dtype=float)
        if self.beta <= 0:
            raise PredictorError("beta must be positive")
        if len(self.horizons) and not np.all(self.horizons > 0):
            raise PredictorError("every decay horizon must be positive")


def decay_value(beta: float, horizon: float, t_now: float,
                t_last: float | None) -> float:
    """beta * max(0, 1 - elapsed/horizon); zero if no token ever entered."""
    if t_last is None:
        return 0.0
    return beta * max(0.0, 1.0 - (t_now - t_last) / horizon)


class DecayState:
    """Token-entry clocks and movement counters for every place."""

    def __init__(self, n_places: int):
        self.t_last = np.full(n_places, np.nan)
        self.counts = np.zeros(n_places, dtype=int)

    def token_entry(self, place_idx: int, t: float) -> None:
        self.t_last[place_idx] = t
        self.counts[place_idx] += 1

    def enter_marking(self, marking, t: float) -> None:
        for i, tokens in enumerate(marking):
            for _ in range(tokens):
                self.token_entry(i, t)

    def begin_cycle(self, marking, t: float) -> None:
        """Start a fresh cycle: zero the counters, register the initial tokens.

        Entry clocks of unmarked places persist across cycles so decay stays
        continuous at the boundary.
        """
        self.counts[:] = 0
        self.enter_marking(marking, t)

    def decay_vector(self, cfg: DecayConfig, t_now: float) -> np.ndarray:
        elapsed = t_now - self.t_last
        vec = cfg.beta * np.clip(1.0 - elapsed / cfg.horizons, 0.0, 1.0)
        return np.where(np.isnan(self.t_last), 0.0, vec)


@dataclass
class TimedStateSample:
    decay: np.ndarray
    counts: np.ndarray
    marking: np.ndarray
    label: str
    time_s: float = 0.0

    def features(self) -> np.ndarray:
        return np.concatenate([self.decay,
                               self.counts.astype(float),
                               self.marking.astype(float)])


# -- replay-driven sampling --------------------------------------------------------

def _replay_steps(net: LabeledPetriNet, activities):
    """Yield (hidden path, labeled transition) per event; None if unfitting."""
    marking = net.initial_marking
    steps = []
    for a in activities:
        candidates = [t.tid for t in net.transitions_labeled(a)]
        if not candidates:
            return None
        found = hidden_path_to_enable(net, marking, candidates)
        if found is None:
            return None
        path, target = found
        for h in path:
            marking = fire(net, marking, h)
        marking = fire(net, marking, target)
        steps.append((path, target))
    return steps


def estimate_horizons(net: LabeledPetriNet, elog: EventLog,
                      factor: float = 2.0) -> np.ndarray:
    """Per-place horizons from observed inter-token-entry intervals.

    horizon = factor * mean interval between consecutive entries during
    training replay; places never entered twice get the maximum trace
    duration so their ramp spans a whole cycle.
    """
    dt = float(elog.meta.get("dt_s", 1.0))
    n = len(net.places)
    intervals: list[list[float]] = [[] for _ in range(n)]
    max_duration = 0.0
    for trace in elog.complete_traces or elog.traces:
        acts = trace.activities()
        steps = _replay_steps(net, acts)
        if steps is None:
            continue
        times = [e.tick * dt for e in trace.events]
        if times:
            max_duration = max(max_duration, times[-1] - times[0])
        last_entry: dict[int, float] = {}
        marking = net.initial_marking
        for i, tokens in enumerate(marking):
            if tokens:
                last_entry[i] = times[0]
        for (path, target), t_now in zip(steps, times):
            for tid in list(path) + [target]:
                for p in net.postset(tid):
                    if p in last_entry:
                        intervals[p].append(t_now - last_entry[p])
                    last_entry[p] = t_now

    horizons = np.empty(n)
    fallback = max(max_duration, 1.0)
    for p in range(n):
        positive = [iv for iv in intervals[p] if iv > 0]
        horizons[p] = factor * float(np.mean(positive)) if positive else fallback
    return horizons


def sample_log(net: LabeledPetriNet, elog: EventLog,
               decay_cfg: DecayConfig) -> tuple[list[TimedStateSample], int]:
    """Timed state samples from replaying every fitting trace of the log.

    One sample per event (snapshotted at the event's timestamp, labeled with
    its activity, taken before anything fires for it) plus one END sample per
    trace after the last event. Hidden firings update the decay state but
    yield no sample. Unfitting traces are skipped; returns (samples, skipped).
    """
    dt = float(elog.meta.get("dt_s", 1.0))
    samples: list[TimedStateSample] = []
    skipped = 0
    for trace in elog.traces:
        acts = trace.activities()
        steps = _replay_steps(net, acts)
        if steps is None:
            skipped += 1
            log.warning("skipping trace that does not replay on the net")
            continue
        times = [e.tick * dt for e in trace.events]
        state = DecayState(len(net.places))
        marking = np.array(net.initial_marking)
        state.begin_cycle(net.initial_marking, times[0])
        for (path, target), activity, t_now in zip(steps, acts, times):
            samples.append(TimedStateSample(
                decay=state.decay_vector(decay_cfg, t_now),
                counts=state.counts.copy(),
                marking=marking.copy(),
                label=activity,
                time_s=t_now,
            ))
            for tid in list(path) + [target]:
                for p in net.preset(tid):
                    marking[p] -= 1
                for p in net.postset(tid):
                    marking[p] += 1
                    state.token_entry(p, t_now)
        samples.append(TimedStateSample(
            decay=state.decay_vector(decay_cfg, times[-1]),
            counts=state.counts.copy(),
            marking=marking.copy(),
            label=END_LABEL,
            time_s=times[-1],
        ))
    return samples, skipped


# -- classifier --------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(weights, biases, x: np.ndarray):
    """Forward pass; returns (activations per layer, output probabilities)."""
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ w + b)
        acts.append(h)
    probs = softmax(h @ weights[-1] + biases[-1])
    return acts, probs


def loss_and_grads(weights, biases, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    n = x.shape[0]
    acts, probs = forward(weights, biases, x)
    eps = 1e-12
    loss = -np.mean(np.log(probs[np.arange(n), y] + eps))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - acts[layer] ** 2)
    return loss, grads_w, grads_b


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.5
    seed: int = 0
    hidden_sizes: tuple[int, ...] | None = None  # default 2*(3*|P|) twice
    batch_size: int = 32


@dataclass
class NextActivityModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activity_index: dict[str, int]      # label -> output index, includes END
    feature_mean: np.ndarray
    feature_std: np.ndarray
    decay: DecayConfig
    training_meta: dict = field(default_factory=dict)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feature_mean) / self.feature_std

    def predict(self, sample: TimedStateSample) -> list[tuple[str, float]]:
        """Softmax distribution over activities (plus END), best first."""
        feats = sample.features()
        if feats.shape[0] != self.layer_sizes[0]:
            raise PredictorError(
                f"sample has {feats.shape[0]} features, model expects "
                f"{self.layer_sizes[0]}")
        x = self.normalize(feats)[None, :]
        _, probs = forward(self.weights, self.biases, x)
        by_label = {label: float(probs[0, idx])
                    for label, idx in self.activity_index.items()}
        return sorted(by_label.items(), key=lambda kv: (-kv[1], kv[0]))


def train(samples: list[TimedStateSample], config: TrainConfig,
          decay_cfg: DecayConfig,
          eval_samples: list[TimedStateSample] | None = None) -> NextActivityModel:
    """Train the classifier on timed state samples with seeded mini-batch GD."""
    if not samples:
        raise PredictorError("no samples to train on")
    feats = np.stack([s.features() for s in samples])
    dims = {s.features().shape[0] for s in samples}
    if len(dims) != 1:
        raise PredictorError(f"inconsistent sample dimensions: {sorted(dims)}")

    labels = sorted({s.label for s in samples} | {END_LABEL})
    activity_index = {label: i for i, label in enumerate(labels)}
    y = np.array([activity_index[s.label] for s in samples])

    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std == 0] = 1.0
    x = (feats - mean) / std

    d_in = feats.shape[1]
    hidden = config.hidden_sizes or (2 * d_in, 2 * d_in)
    sizes = [d_in, *hidden, len(labels)]

    rng = np.random.Generator(np.random.PCG64(config.seed))
    weights = []
    biases = []
    for a, b in zip(sizes, sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(1.0 / a), size=(a, b)))
        biases.append(np.zeros(b))

    n = x.shape[0]
    batch = min(config.batch_size, n)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, gw, gb = loss_and_grads(weights, biases, x[idx], y[idx])
            for layer in range(len(weights)):
                weights[layer] -= config.learning_rate * gw[layer]
                biases[layer] -= config.learning_rate * gb[layer]

    model = NextActivityModel(
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        activity_index=activity_index,
        feature_mean=mean,
        feature_std=std,
        decay=decay_cfg,
        training_meta={"epochs": config.epochs, "seed": config.seed,
                       "learning_rate": config.learning_rate,
                       "samples": n},
    )
    model.training_meta["train_accuracy"] = accuracy(model, samples)
    if eval_samples is not None:
        model.training_meta["test_accuracy"] = accuracy(model, eval_samples)
    return model


def accuracy(model: NextActivityModel, samples: list[TimedStateSample]) -> float:
    if not samples:
        return float("nan")
    hits = sum(1 for s in samples if model.predict(s)[0][0] == s.label)
    return hits / len(samples)


# -- persistence --------------------------------------------------------------------

def model_to_dict(model: NextActivityModel) -> dict:
    return {
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],  # row-major per layer
        "biases": [b.tolist() for b in model.biases],
        "activity_index": dict(model.activity_index),
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "decay": {"beta": model.decay.beta,
                  "horizons": model.decay.horizons.tolist()},
        "training_meta": dict(model.training_meta),
    }


def model_from_dict(data: dict) -> NextActivityModel:
    return NextActivityModel(
        layer_sizes=list(data["layer_sizes"]),
        weights=[np.array(w) for w in data["weights"]],
        biases=[np.array(b) for b in data["biases"]],
        activity_index=dict(data["activity_index"]),
        feature_mean=np.array(data["feature_mean"]),
        feature_std=np.array(data["feature_std"]),
        decay=DecayConfig(data["decay"]["beta"], np.array(data["decay"]["horizons"])),
        training_meta=dict(data["training_meta"]),
    )


def write_model(model: NextActivityModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_model(path) -> NextActivityModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def write_samples_csv(samples: list[TimedStateSample], places, path) -> None:
    header = (["label", "time_s"]
              + [f"decay:{p}" for p in places]
              + [f"count:{p}" for p in places]
              + [f"marking:{p}" for p in places])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in samples:
            w.writerow([s.label, f"{s.time_s:.3f}"]
                       + [f"{v:.6f}" for v in s.decay]
                       + list(s.counts) + list(s.marking))
