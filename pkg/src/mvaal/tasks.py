"""Downstream task learners (mini U-Net, small CNN classifier) and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tensor


class TaskError(ValueError):
    pass


@dataclass
class TaskSpec:
    kind: str  # segmentation | multilabel | multiclass
    num_classes: int = 1
    epochs: int = 12
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = ""  # default: rmsprop for segmentation, adam otherwise
    image_size: int = 32
    base_width: int = 8

    def __post_init__(self):
        if self.kind not in ("segmentation", "multilabel", "multiclass"):
            raise TaskError(f"unknown task kind: {self.kind}")
        if not self.optimizer:
            self.optimizer = "rmsprop" if self.kind == "segmentation" else "adam"


@dataclass
class TaskModel:
    spec: TaskSpec
    params: nn.ParamSet
    model: object
    best_epoch: int
    best_val_metric: float
    log: list = field(default_factory=list)  # (epoch, train_loss, val_metric)


# -- architectures -------------------------------------------------------------


class Classifier:
    def __init__(self, spec: TaskSpec):
        w = spec.base_width
        self.net = nn.Network("clf", [
            nn.conv2d("c1", 1, w, 3, padding=1), nn.relu(), nn.max_pool(2),
            nn.conv2d("c2", w, 2 * w, 3, padding=1), nn.relu(), nn.max_pool(2),
            nn.conv2d("c3", 2 * w, 4 * w, 3, padding=1), nn.relu(), nn.max_pool(2),
            nn.conv2d("c4", 4 * w, 4 * w, 3, padding=1), nn.relu(), nn.max_pool(2),
            nn.flatten(),
            nn.linear("fc", 4 * w * (spec.image_size // 16) ** 2, spec.num_classes,
                      activation="linear"),
        ])

    def init(self, seed):
        return self.net.init(seed)

    def forward(self, params, x):
        return self.net.forward(params, x)


class MiniUNet:
    """Two-level U-Net with a single skip connection."""

    def __init__(self, spec: TaskSpec):
        w = spec.base_width * 2  # 16/32 channels at the default width
        self.enc1 = nn.Network("unet_enc1", [
            nn.conv2d("c", 1, w, 3, padding=1), nn.relu(),
        ])
        self.enc2 = nn.Network("unet_enc2", [
            nn.conv2d("c", w, 2 * w, 3, padding=1), nn.relu(),
        ])
        self.up = nn.Network("unet_up", [
            nn.tconv2d("t", 2 * w, w, 2, stride=2),
        ])
        self.head = nn.Network("unet_head", [
            nn.conv2d("c", 2 * w, w, 3, padding=1), nn.relu(),
            nn.conv2d("out", w, 1, 1, activation="linear"),
        ])
        self._nets = [self.enc1, self.enc2, self.up, self.head]

    def init(self, seed):
        rng = np.random.default_rng(seed)
        sets = [net.init(int(rng.integers(2 ** 31))) for net in self._nets]
        return sets[0].merged(*sets[1:])

    def forward(self, params, x):
        h1 = self.enc1.forward(params, x)
        h2 = self.enc2.forward(params, T.max_pool2d(h1, 2))
        up = self.up.forward(params, h2)
        cat = T.concat([up, h1], axis=1)
        return self.head.forward(params, cat)


def build_model(spec: TaskSpec):
    return MiniUNet(spec) if spec.kind == "segmentation" else Classifier(spec)


# -- losses ----------------------------------------------------------------------


def _bce_with_logits(logits: Tensor, target: Tensor) -> Tensor:
    # max(x,0) - x*t + log(1 + exp(-|x|)), mean-reduced
    absx = T.relu(logits) + T.relu(-logits)
    return T.mean(T.relu(logits) - logits * target + T.log(1.0 + T.exp(-absx)))


def segmentation_loss(pred_logits: Tensor, target_mask) -> Tensor:
    """Pixel-wise BCE plus soft-Dice loss (smoothing 1.0)."""
    t = target_mask if isinstance(target_mask, Tensor) else Tensor(target_mask)
    if pred_logits.shape != t.shape:
        raise T.ShapeError(f"segmentation_loss: {pred_logits.shape} vs {t.shape}")
    bce = _bce_with_logits(pred_logits, t)
    p = T.sigmoid(pred_logits)
    inter = T.sum_(p * t)
    soft_dice = (2.0 * inter + 1.0) / (T.sum_(p) + T.sum_(t) + 1.0)
    return bce + (1.0 - soft_dice)


def classification_loss(pred_logits: Tensor, target, kind: str) -> Tensor:
    if kind == "multiclass":
        labels = np.asarray(target, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= pred_logits.shape[1]:
            raise TaskError("target class out of range")
        return T.mean(T.softmax_cross_entropy(pred_logits, labels))
    if kind == "multilabel":
        t = target if isinstance(target, Tensor) else Tensor(target)
        return _bce_with_logits(pred_logits, t)
    raise TaskError(f"unknown classification kind: {kind}")


# -- metrics ----------------------------------------------------------------------


def dice_score(pred_mask, gt_mask) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks score 1."""
    a = np.asarray(pred_mask).astype(bool)
    b = np.asarray(gt_mask).astype(bool)
    if a.shape != b.shape:
        raise T.ShapeError(f"dice_score: {a.shape} vs {b.shape}")
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / denom)


def average_precision(scores, targets) -> float:
    """AP = sum of precision at each positive rank / #positives.

    Descending-score ranking; ties broken by ascending sample index.
    """
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets).astype(bool)
    npos = int(targets.sum())
    if npos == 0:
        raise TaskError("average_precision: no positives")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = targets[order]
    cum = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    return float((cum[hits] / ranks[hits]).sum() / npos)


def mean_average_precision(scores, targets):
    """Mean AP over classes with >=1 positive; returns (mAP, n_included)."""
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets)
    aps = []
    for c in range(scores.shape[1]):
        if targets[:, c].sum() >= 1:
            aps.append(average_precision(scores[:, c], targets[:, c]))
    if not aps:
        raise TaskError("mean_average_precision: no class has positives")
    return float(np.mean(aps)), len(aps)


def overall_accuracy(preds, targets) -> float:
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    if preds.shape != targets.shape:
        raise T.ShapeError(f"overall_accuracy: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise TaskError("overall_accuracy: empty input")
    return float(np.mean(preds == targets))


# -- training loop ------------------------------------------------------------------


def _targets_for(spec: TaskSpec, dataset_view, idx):
    if spec.kind == "segmentation":
        return dataset_view.masks[idx]
    if spec.kind == "multilabel":
        return dataset_view.multilabels[idx]
    return dataset_view.classes[idx]


def evaluate(spec: TaskSpec, model, params: nn.ParamSet, view, batch_size=256) -> float:
    """Task metric on a dataset view (Dice / mAP / accuracy)."""
    params.mode = "evaluation"
    outs = []
    with T.no_grad():
        for i in range(0, view.n, batch_size):
            x = Tensor(view.m1[i:i + batch_size])
            outs.append(model.forward(params, x).data)
    logits = np.concatenate(outs)
    params.mode = "training"
    if spec.kind == "segmentation":
        preds = 1.0 / (1.0 + np.exp(-logits)) > 0.5
        scores = [dice_score(preds[i], view.masks[i] > 0.5) for i in range(view.n)]
        return float(np.mean(scores))
    if spec.kind == "multilabel":
        return mean_average_precision(logits, view.multilabels)[0]
    return overall_accuracy(logits.argmax(axis=1), view.classes)


def train_task(spec: TaskSpec, labeled_view, val_view, seed: int) -> TaskModel:
    """Train from a fresh init; return the best-validation checkpoint."""
    if labeled_view.n == 0 or val_view.n == 0:
        raise TaskError("train_task: empty labeled or validation view")
    model = build_model(spec)
    params = model.init(int(seed))
    opt = nn.make_optimizer(spec.optimizer, spec.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7a5c]))

    best = (-np.inf, -1, None)  # metric, epoch, snapshot
    log = []
    for epoch in range(spec.epochs):
        order = rng.permutation(labeled_view.n)
        losses = []
        for i in range(0, labeled_view.n, spec.batch_size):
            idx = order[i:i + spec.batch_size]
            x = Tensor(labeled_view.m1[idx])
            logits = model.forward(params, x)
            if spec.kind == "segmentation":
                loss = segmentation_loss(logits, labeled_view.masks[idx])
            else:
                loss = classification_loss(logits, _targets_for(spec, labeled_view, idx), spec.kind)
            if not np.isfinite(loss.item()):
                raise FloatingPointError(
                    f"non-finite task loss (kind={spec.kind}, epoch={epoch})")
            nn.optimizer_step(opt, params, nn.compute_grads(loss, params))
            losses.append(loss.item())
        val_metric = evaluate(spec, model, params, val_view)
        log.append((epoch, float(np.mean(losses)), val_metric))
        if val_metric > best[0]:
            best = (val_metric, epoch, params.copy())

    metric, epoch, snapshot = best
    params.load_values(snapshot)
    return TaskModel(spec=spec, params=params, model=model,
                     best_epoch=epoch, best_val_metric=metric, log=log)
