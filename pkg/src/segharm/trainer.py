"""Stratified splitting and per-segment model training.

Splits come from greedy iterative stratification with exact split-size
quotas, which keeps per-class proportions close to the requested ratios and
guarantees every class a training example.  Models are logistic classifiers
over one segment's classes, optionally with a tanh hidden layer, optimized
by a from-scratch AdamW on the configured loss.  Everything is deterministic
for a fixed seed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Dataset
from .losses import LossConfig, batch_loss_and_grad, sigmoid
from .segmenter import RateTable, Segmentation, beta_sh_from_counts

MODEL_MAGIC = b"SGHM"
MODEL_VERSION = 1
_MODEL_HEADER = "<IIQQQQd"  # version, segment, start_rank, feature_dim, hidden_dim, classes, threshold


class TrainerError(ValueError):
    """Raised for invalid training setups or diverging runs."""


@dataclass
class SplitSpec:
    """Integer percentage ratios for train, validation, and test."""

    ratios: tuple = (94, 3, 3)
    seed: int = 0

    def __post_init__(self):
        ratios = tuple(int(r) for r in self.ratios)
        if len(ratios) != 3 or any(r < 1 for r in ratios) or sum(ratios) != 100:
            raise TrainerError("split ratios must be three positive integers summing to 100")
        self.ratios = ratios


def _largest_remainder(total: int, ratios) -> list:
    """Integer split sizes within 1 of the exact proportions, summing to total."""
    exact = [total * r / 100.0 for r in ratios]
    base = [math.floor(x) for x in exact]
    leftover = total - sum(base)
    order = sorted(range(len(ratios)), key=lambda j: (-(exact[j] - base[j]), j))
    for j in order[:leftover]:
        base[j] += 1
    return base


def stratified_split(dataset: Dataset, spec: SplitSpec):
    """Greedy iterative stratification into train, validation, and test.

    Samples are placed rarest label first, each going to the split with the
    largest remaining desired count for that label, subject to exact size
    quotas.  Any class present in the dataset ends up with at least one
    training sample; a swap repair enforces that in the rare case the greedy
    pass misses it.
    """
    records = list(dataset.records)
    n = len(records)
    if n == 0:
        raise TrainerError("cannot split an empty dataset")
    quotas = _largest_remainder(n, spec.ratios)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    pos = {int(i): k for k, i in enumerate(rng.permutation(n))}

    class_members = {}
    for i, rec in enumerate(records):
        for code in rec.codes:
            class_members.setdefault(code, set()).add(i)
    desired = {c: [len(m) * r / 100.0 for r in spec.ratios] for c, m in class_members.items()}

    capacity = list(quotas)
    assignment = [None] * n
    unassigned = set(range(n))
    while unassigned:
        pending = [(len(m), c) for c, m in class_members.items() if m]
        if not pending:
            break
        _, cls = min(pending)
        for i in sorted(class_members[cls], key=pos.__getitem__):
            best, best_key = None, None
            for j in range(3):
                if capacity[j] <= 0:
                    continue
                key = (desired[cls][j], capacity[j], -j)
                if best is None or key > best_key:
                    best, best_key = j, key
            assignment[i] = best
            capacity[best] -= 1
            unassigned.discard(i)
            for code in records[i].codes:
                class_members[code].discard(i)
                desired[code][best] -= 1.0
    for i in sorted(unassigned, key=pos.__getitem__):  # records whose classes all emptied
        j = max(range(3), key=lambda j: (capacity[j], -j))
        assignment[i] = j
        capacity[j] -= 1

    _repair_train_coverage(records, assignment, pos)

    splits = ([], [], [])
    for i, rec in enumerate(records):
        splits[assignment[i]].append(rec)

    def mk(recs):
        universe = set()
        for rec in recs:
            universe.update(rec.codes)
        return Dataset(records=recs, class_universe=universe)

    return mk(splits[0]), mk(splits[1]), mk(splits[2])


def _repair_train_coverage(records, assignment, pos) -> None:
    """Swap samples so every class has at least one training example."""
    train_counts = {}
    for i, rec in enumerate(records):
        if assignment[i] == 0:
            for code in rec.codes:
                train_counts[code] = train_counts.get(code, 0) + 1
    all_codes = set()
    for rec in records:
        all_codes.update(rec.codes)
    for cls in sorted(all_codes):
        if train_counts.get(cls, 0) > 0:
            continue
        donor = min((i for i, rec in enumerate(records) if cls in rec.codes), key=pos.__getitem__)
        donor_split = assignment[donor]
        swap = None
        for i in sorted(range(len(records)), key=pos.__getitem__):
            if assignment[i] != 0:
                continue
            if all(train_counts.get(code, 0) >= 2 for code in records[i].codes):
                swap = i
                break
        assignment[donor] = 0
        for code in records[donor].codes:
            train_counts[code] = train_counts.get(code, 0) + 1
        if swap is not None:
            assignment[swap] = donor_split
            for code in records[swap].codes:
                train_counts[code] -= 1


@dataclass
class TrainConfig:
    """Optimization settings; the optimizer defaults are the usual AdamW ones."""

    learning_rate: float = 0.0005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 32
    max_steps: int = 1000
    seed: int = 0
    hidden_dim: int = 0  # 0 trains a linear model
    decision_threshold: float = 0.5
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainerError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise TrainerError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise TrainerError("max_steps must be >= 0")
        if not 0.0 < self.decision_threshold < 1.0:
            raise TrainerError("decision_threshold must lie in (0, 1)")
        if self.hidden_dim < 0:
            raise TrainerError("hidden_dim must be >= 0")


def init_adamw_state(params: dict) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adamw_step(params: dict, grads: dict, state: dict, config: TrainConfig, step: int):
    """One decoupled-weight-decay Adam update; returns new params and state.

    The decay term uses the incoming parameter values, independent of the
    gradient path, so zero gradient with nonzero decay still shrinks the
    parameters by lr * weight_decay.
    """
    if step < 1:
        raise TrainerError("step counts from 1")
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, eps, wd = config.learning_rate, config.adam_eps, config.weight_decay
    new_params = {}
    new_m = {}
    new_v = {}
    for key, theta in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise TrainerError(f"non-finite gradient for {key!r} at step {step}")
        m = b1 * state["m"][key] + (1.0 - b1) * g
        v = b2 * state["v"][key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        new_params[key] = theta - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * wd * theta
        new_m[key] = m
        new_v[key] = v
    return new_params, {"m": new_m, "v": new_v}


@dataclass
class SegmentModel:
    """A classifier over one segment's classes.

    ``params`` holds "w" and "b" for the output layer and, when hidden_dim
    is positive, "w_h" and "b_h" for the tanh hidden layer.
    """

    segment_index: int
    start_rank: int
    params: dict
    hidden_dim: int = 0
    decision_threshold: float = 0.5

    @property
    def weights(self) -> np.ndarray:
        return self.params["w"]

    @property
    def bias(self) -> np.ndarray:
        return self.params["b"]

    @property
    def num_classes(self) -> int:
        return self.params["w"].shape[1]

    @property
    def feature_dim(self) -> int:
        key = "w_h" if self.hidden_dim > 0 else "w"
        return self.params[key].shape[0]

    def logits(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.hidden_dim > 0:
            hidden = np.tanh(X @ self.params["w_h"] + self.params["b_h"])
            return hidden @ self.params["w"] + self.params["b"]
        return X @ self.params["w"] + self.params["b"]


def _init_params(feature_dim: int, num_classes: int, hidden_dim: int, rng) -> dict:
    if hidden_dim > 0:
        return {
            "w_h": rng.normal(0.0, 0.01, size=(feature_dim, hidden_dim)),
            "b_h": np.zeros(hidden_dim),
            "w": rng.normal(0.0, 0.01, size=(hidden_dim, num_classes)),
            "b": np.zeros(num_classes),
        }
    return {
        "w": rng.normal(0.0, 0.01, size=(feature_dim, num_classes)),
        "b": np.zeros(num_classes),
    }


def _design_matrices(dataset: Dataset, seg: Segmentation, rates: RateTable, r: int, loss: LossConfig, rank_of: dict):
    """Feature matrix, projected targets, per-sample rates, and class counts."""
    records = dataset.records
    if not records:
        raise TrainerError("training split is empty")
    if any(rec.features is None for rec in records):
        raise TrainerError("training needs feature vectors on every record")
    X = np.stack([np.asarray(rec.features, dtype=np.float64) for rec in records])
    start, end = seg.segments[r]
    seg_of = seg.rank_to_segment()
    n = len(records)
    Y = np.zeros((n, end - start + 1), dtype=np.float64)
    seg_pos = np.zeros((n, seg.num_segments), dtype=np.int64)
    for k, rec in enumerate(records):
        for code in rec.codes:
            rank = rank_of.get(code)
            if rank is None:
                raise TrainerError(f"code {code!r} has no rank in the frequency table")
            seg_pos[k, seg_of[rank]] += 1
            if start <= rank <= end:
                Y[k, rank - start] = 1.0
    if loss.family in ("sh", "sh_focal"):
        betas = np.array([beta_sh_from_counts(seg_pos[k], rates.rates, r) for k in range(n)])
        if not loss.sh_on_positives:
            betas[Y.any(axis=1)] = 1.0
    else:
        betas = np.ones(n)
    class_counts = Y.sum(axis=0) if loss.family == "cb_focal" else None
    return X, Y, betas, class_counts


def _forward_backward(params: dict, X, Y, betas, config: TrainConfig, class_counts):
    if config.hidden_dim > 0:
        pre = X @ params["w_h"] + params["b_h"]
        hidden = np.tanh(pre)
        logits = hidden @ params["w"] + params["b"]
        loss, grad_logits = batch_loss_and_grad(logits, Y, betas, config.loss, class_counts)
        grads = {"w": hidden.T @ grad_logits, "b": grad_logits.sum(axis=0)}
        grad_hidden = (grad_logits @ params["w"].T) * (1.0 - hidden**2)
        grads["w_h"] = X.T @ grad_hidden
        grads["b_h"] = grad_hidden.sum(axis=0)
        return loss, grads
    logits = X @ params["w"] + params["b"]
    loss, grad_logits = batch_loss_and_grad(logits, Y, betas, config.loss, class_counts)
    return loss, {"w": X.T @ grad_logits, "b": grad_logits.sum(axis=0)}


def train_segment_model(
    train: Dataset,
    seg: Segmentation,
    rates: RateTable,
    r: int,
    config: TrainConfig,
    rank_of: dict,
):
    """Fit segment r's classifier on every training record.

    Records without a positive class in the segment act as negatives.  For
    the rate-modulated families each record's rate comes from the segments
    holding its positive classes, recomputed from its full label, so the
    projection never loses that information.  Returns the model and the
    (step, loss) history.
    """
    if not 0 <= r < seg.num_segments:
        raise TrainerError(f"segment index {r} out of range")
    X, Y, betas, class_counts = _design_matrices(train, seg, rates, r, config.loss, rank_of)
    # one stream per segment so models are independent but reproducible
    rng = np.random.Generator(np.random.PCG64(config.seed + r))
    params = _init_params(X.shape[1], Y.shape[1], config.hidden_dim, rng)
    state = init_adamw_state(params)
    history = []
    step = 0
    n = X.shape[0]
    while step < config.max_steps:
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            if step >= config.max_steps:
                break
            idx = order[lo : lo + config.batch_size]
            step += 1
            loss, grads = _forward_backward(params, X[idx], Y[idx], betas[idx], config, class_counts)
            if not np.isfinite(loss):
                raise TrainerError(f"loss diverged at step {step}")
            params, state = adamw_step(params, grads, state, config, step)
            history.append((step, loss))
    model = SegmentModel(
        segment_index=r,
        start_rank=seg.segments[r][0],
        params=params,
        hidden_dim=config.hidden_dim,
        decision_threshold=config.decision_threshold,
    )
    return model, history


def predict_batch(models, X, num_segments: int | None = None) -> list:
    """Union of the per-segment predictions, one rank set per input row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise TrainerError("predict_batch expects a 2-d feature matrix")
    indices = sorted(m.segment_index for m in models)
    expected = list(range(num_segments)) if num_segments is not None else list(range(len(models)))
    if indices != expected:
        raise TrainerError(f"missing segment models: have {indices}, expected {expected}")
    out = [set() for _ in range(X.shape[0])]
    for model in sorted(models, key=lambda m: m.segment_index):
        probs = sigmoid(model.logits(X))
        for row, col in zip(*np.nonzero(probs >= model.decision_threshold)):
            out[int(row)].add(model.start_rank + int(col))
    return out


def predict(models, features, num_segments: int | None = None) -> set:
    """Predicted class ranks for a single feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise TrainerError("predict expects a single feature vector")
    return predict_batch(models, features[None, :], num_segments)[0]


def _param_order(hidden_dim: int) -> list:
    return ["w_h", "b_h", "w", "b"] if hidden_dim > 0 else ["w", "b"]


def save_model(model: SegmentModel, path) -> None:
    """Binary checkpoint: magic "SGHM", header, then float64 LE parameters."""
    header = MODEL_MAGIC + struct.pack(
        _MODEL_HEADER,
        MODEL_VERSION,
        model.segment_index,
        model.start_rank,
        model.feature_dim,
        model.hidden_dim,
        model.num_classes,
        model.decision_threshold,
    )
    body = b"".join(model.params[k].astype("<f8").tobytes(order="C") for k in _param_order(model.hidden_dim))
    Path(path).write_bytes(header + body)


def load_model(path) -> SegmentModel:
    blob = Path(path).read_bytes()
    header_size = 4 + struct.calcsize(_MODEL_HEADER)
    if len(blob) < header_size or blob[:4] != MODEL_MAGIC:
        raise TrainerError(f"{path}: not a model checkpoint (bad magic)")
    version, segment_index, start_rank, feature_dim, hidden_dim, num_classes, threshold = struct.unpack_from(
        _MODEL_HEADER, blob, 4
    )
    if version != MODEL_VERSION:
        raise TrainerError(f"{path}: unsupported checkpoint version {version}")
    if hidden_dim > 0:
        shapes = [("w_h", (feature_dim, hidden_dim)), ("b_h", (hidden_dim,)),
                  ("w", (hidden_dim, num_classes)), ("b", (num_classes,))]
    else:
        shapes = [("w", (feature_dim, num_classes)), ("b", (num_classes,))]
    expected = header_size + sum(int(np.prod(shape)) * 8 for _, shape in shapes)
    if len(blob) != expected:
        raise TrainerError(f"{path}: expected {expected} bytes, found {len(blob)}")
    params = {}
    offset = header_size
    for key, shape in shapes:
        size = int(np.prod(shape))
        params[key] = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset += size * 8
    return SegmentModel(
        segment_index=segment_index,
        start_rank=start_rank,
        params=params,
        hidden_dim=hidden_dim,
        decision_threshold=threshold,
    )


def write_loss_history(history, path) -> None:
    lines = ["step,loss"]
    for step, loss in history:
        lines.append(f"{step},{loss!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
