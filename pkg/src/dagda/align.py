"""Alignment of visual features with the anchor space.

The model projects features with ``W_cons``, reconstructs them with
``W_recons`` and ties projected samples to attribute anchors through a
bilinear metric ``M``::

    L = ||X Wc - Y U_C||^2 + l1 ||X Wc Wr - X||^2 + l2 ||Y C - X Wc M U_T^T||^2

Each term is divided by the number of samples unless ``normalize_loss`` is off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorSet
from .errors import ConfigError, DimensionError, NumericalError, ProtocolError, ValidationError
from .numerics import Adam, Mat, Rng, as_mat, glorot_init, matmul


@dataclass
class AlignConfig:
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 64
    lambda1: float = 1.0
    lambda2: float = 5e-6
    reg_enabled: bool = True
    tied_weights: bool = False
    normalize_loss: bool = True
    cosine_scores: bool = False


@dataclass
class AlignModel:
    W_cons: Mat
    W_recons: Mat
    M: Mat
    lambda1: float = 1.0
    lambda2: float = 5e-6
    reg_enabled: bool = True
    tied_weights: bool = False
    normalize_loss: bool = True
    cosine_scores: bool = False
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.reg_enabled:
            self.lambda2 = 0.0
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be nonnegative")

    @property
    def params(self) -> list[Mat]:
        if self.tied_weights:
            return [self.W_cons, self.M]
        return [self.W_cons, self.W_recons, self.M]

    @property
    def recons(self) -> Mat:
        return self.W_cons.T if self.tied_weights else self.W_recons


@dataclass(frozen=True)
class LabeledBatch:
    X: Mat
    labels: np.ndarray
    num_classes: int

    @classmethod
    def from_labels(cls, X, labels, num_classes: int) -> "LabeledBatch":
        X = as_mat(X, "features")
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if X.shape[0] != labels.shape[0]:
            raise DimensionError(f"{X.shape[0]} feature rows but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValidationError(f"labels must lie in [0, {num_classes})")
        return cls(X=X, labels=labels, num_classes=num_classes)

    @property
    def Y(self) -> Mat:
        Y = np.zeros((self.labels.shape[0], self.num_classes))
        Y[np.arange(self.labels.shape[0]), self.labels] = 1.0
        return Y

    def subset(self, idx) -> "LabeledBatch":
        return LabeledBatch(X=self.X[idx], labels=self.labels[idx], num_classes=self.num_classes)

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def _check_shapes(m: AlignModel, b: LabeledBatch, anchors: AnchorSet, C: Mat) -> None:
    dx, d = m.W_cons.shape
    if b.X.shape[1] != dx:
        raise DimensionError(f"features have {b.X.shape[1]} columns, W_cons expects {dx}")
    if anchors.dim != d:
        raise DimensionError(f"anchors have dim {anchors.dim}, W_cons maps to {d}")
    if m.M.shape != (d, d):
        raise DimensionError(f"M has shape {m.M.shape}, expected ({d}, {d})")
    if m.recons.shape != (d, dx):
        raise DimensionError(f"W_recons has shape {m.recons.shape}, expected ({d}, {dx})")
    if C.shape != (anchors.num_classes, anchors.attr_rows.shape[0]):
        raise DimensionError(f"class-attribute matrix {C.shape} does not match anchors")
    if b.num_classes != anchors.num_classes:
        raise DimensionError(f"batch has {b.num_classes} classes, anchors {anchors.num_classes}")


def loss_terms(m: AlignModel, b: LabeledBatch, anchors: AnchorSet, C: Mat) -> dict[str, float]:
    """The three unweighted loss terms, computed directly."""
    _check_shapes(m, b, anchors, C)
    n = len(b) if m.normalize_loss else 1
    Y = b.Y
    Ut = b.X @ m.W_cons
    return {
        "cons": float(np.sum((Ut - Y @ anchors.class_rows) ** 2)) / n,
        "recons": float(np.sum((Ut @ m.recons - b.X) ** 2)) / n,
        "reg": float(np.sum((Y @ C - Ut @ m.M @ anchors.attr_rows.T) ** 2)) / n,
    }


def align_loss(m: AlignModel, b: LabeledBatch, anchors: AnchorSet, C: Mat
               ) -> tuple[float, list[Mat]]:
    """Total loss and gradients, ordered as ``m.params``."""
    _check_shapes(m, b, anchors, C)
    if len(b) == 0:
        raise ValidationError("empty batch")
    scale = 1.0 / len(b) if m.normalize_loss else 1.0
    Y = b.Y
    X = b.X
    Wr = m.recons
    Uc, Ut_attr = anchors.class_rows, anchors.attr_rows

    # overflow shows up as a non-finite term and is reported below by name
    with np.errstate(over="ignore", invalid="ignore"):
        Ut = X @ m.W_cons
        r_cons = Ut - Y @ Uc
        r_recons = Ut @ Wr - X
        r_reg = Ut @ m.M @ Ut_attr.T - Y @ C
        terms = {
            "L_cons": scale * float(np.sum(r_cons * r_cons)),
            "L_recons": scale * float(np.sum(r_recons * r_recons)),
            "L_reg": scale * float(np.sum(r_reg * r_reg)),
        }
    for name, val in terms.items():
        if not np.isfinite(val):
            raise NumericalError(f"{name} diverged ({val})")
    total = terms["L_cons"] + m.lambda1 * terms["L_recons"] + m.lambda2 * terms["L_reg"]

    g_recons = 2.0 * scale * m.lambda1 * (Ut.T @ r_recons)
    reg_back = r_reg @ Ut_attr
    dUt = 2.0 * scale * (r_cons + m.lambda1 * (r_recons @ Wr.T) + m.lambda2 * (reg_back @ m.M.T))
    g_cons = X.T @ dUt
    g_M = 2.0 * scale * m.lambda2 * (Ut.T @ reg_back)
    if m.tied_weights:
        return total, [g_cons + g_recons.T, g_M]
    return total, [g_cons, g_recons, g_M]


def init_align_model(dx: int, d: int, cfg: AlignConfig, rng: Rng) -> AlignModel:
    W_cons = glorot_init(rng, dx, d)
    W_recons = glorot_init(rng, d, dx)
    return AlignModel(W_cons=W_cons, W_recons=W_recons, M=np.eye(d),
                      lambda1=cfg.lambda1, lambda2=cfg.lambda2 if cfg.reg_enabled else 0.0,
                      reg_enabled=cfg.reg_enabled, tied_weights=cfg.tied_weights,
                      normalize_loss=cfg.normalize_loss, cosine_scores=cfg.cosine_scores)


def train_align(b: LabeledBatch, anchors: AnchorSet, C: Mat, cfg: AlignConfig, rng: Rng,
                allowed_classes=None) -> AlignModel:
    """Mini-batch Adam over ``cfg.epochs`` shuffled passes.

    ``loss_trace`` records the full-data loss at initialisation and after
    every epoch. ``allowed_classes`` (typically the seen split) guards
    against training on other labels.
    """
    if cfg.epochs < 1 or cfg.batch_size < 1:
        raise ConfigError("align epochs and batch size must be >= 1")
    if len(b) == 0:
        raise ValidationError("no training samples")
    if allowed_classes is not None:
        bad = np.setdiff1d(np.unique(b.labels), np.asarray(list(allowed_classes)))
        if bad.size:
            raise ProtocolError(f"training labels include non-seen classes {bad.tolist()}")
    C = as_mat(C, "class-attribute matrix")
    m = init_align_model(b.X.shape[1], anchors.dim, cfg, rng)
    opt = Adam(lr=cfg.lr)
    trace = [align_loss(m, b, anchors, C)[0]]
    n = len(b)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = b.subset(order[start:start + cfg.batch_size])
            _, grads = align_loss(m, batch, anchors, C)
            opt.step(m.params, grads)
        trace.append(align_loss(m, b, anchors, C)[0])
    m.loss_trace = trace
    return m


def embed(m: AlignModel, X: Mat) -> Mat:
    return matmul(np.asarray(X, dtype=np.float64), m.W_cons)


def class_scores(m: AlignModel, X: Mat, anchors: AnchorSet, label_set) -> Mat:
    """Score table (rows = samples, columns follow ``label_set``)."""
    labels = np.asarray(list(label_set), dtype=np.int64)
    if labels.size == 0:
        raise ValidationError("label set is empty")
    if labels.min() < 0 or labels.max() >= anchors.num_classes:
        raise ValidationError(f"label set references classes outside [0, {anchors.num_classes})")
    E = embed(m, X)
    A = anchors.class_rows[labels]
    if m.cosine_scores:
        E = E / np.maximum(np.linalg.norm(E, axis=1, keepdims=True), 1e-300)
        A = A / np.maximum(np.linalg.norm(A, axis=1, keepdims=True), 1e-300)
    return E @ A.T


def classify(m: AlignModel, X: Mat, anchors: AnchorSet, label_set) -> np.ndarray:
    """Highest-scoring class per row; ties go to the smallest class id."""
    labels = np.asarray(sorted(set(int(c) for c in label_set)), dtype=np.int64)
    scores = class_scores(m, X, anchors, labels)
    # labels are sorted, so argmax's first-hit rule picks the smallest id on ties
    return labels[np.argmax(scores, axis=1)]
