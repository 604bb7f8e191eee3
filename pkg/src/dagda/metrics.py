"""Class-balanced accuracy, harmonic mean and the two evaluation protocols.

All metrics are fractions in [0, 1]; percentages are a presentation concern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import MetricUndefinedError, ProtocolError, SplitOverlapError, ValidationError

if TYPE_CHECKING:
    from .align import AlignModel, LabeledBatch
    from .anchors import AnchorSet


@dataclass(frozen=True)
class SplitSpec:
    seen: list[int]
    unseen: list[int]

    def __post_init__(self):
        object.__setattr__(self, "seen", sorted(int(c) for c in self.seen))
        object.__setattr__(self, "unseen", sorted(int(c) for c in self.unseen))
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise SplitOverlapError(f"classes {sorted(overlap)} are both seen and unseen")

    @property
    def all_classes(self) -> list[int]:
        return sorted(self.seen + self.unseen)


@dataclass
class EvalReport:
    mode: str
    per_class: dict[int, float] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)
    mca: float | None = None
    mca_s: float | None = None
    mca_u: float | None = None
    H: float | None = None

    def summary(self) -> dict[str, float]:
        keys = ("mca", "mca_s", "mca_u", "H")
        names = ("MCA", "MCA_s", "MCA_u", "H")
        return {n: getattr(self, k) for k, n in zip(keys, names) if getattr(self, k) is not None}

    def to_text(self) -> str:
        lines = [f"mode={self.mode}"]
        lines += [f"{k}={v:.17g}" for k, v in self.summary().items()]
        lines.append(f"classes={len(self.per_class)}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """``class_id,n,acc`` rows, then one ``name,,value`` row per summary metric."""
        rows = ["class_id,n,acc"]
        rows += [f"{c},{self.counts[c]},{self.per_class[c]:.17g}" for c in sorted(self.per_class)]
        rows += [f"{k},,{v:.17g}" for k, v in self.summary().items()]
        return "\n".join(rows) + "\n"


def per_class_accuracy(preds, labels, class_set, drop_empty: bool = False
                       ) -> tuple[dict[int, float], dict[int, int]]:
    preds = np.asarray(preds).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if preds.shape != labels.shape:
        raise ValidationError(f"{preds.size} predictions but {labels.size} labels")
    classes = sorted(set(int(c) for c in class_set))
    stray = set(np.unique(labels).tolist()) - set(classes)
    if stray:
        raise ValidationError(f"labels {sorted(stray)} are not in the evaluated class set")
    acc, counts = {}, {}
    for c in classes:
        mask = labels == c
        n = int(mask.sum())
        if n == 0:
            if drop_empty:
                continue
            raise MetricUndefinedError(f"class {c} has no test samples; accuracy undefined")
        acc[c] = float(np.mean(preds[mask] == c))
        counts[c] = n
    if not acc:
        raise MetricUndefinedError("no class with test samples")
    return acc, counts


def mca(preds, labels, class_set, drop_empty: bool = False) -> float:
    """Mean over classes of per-class top-1 accuracy."""
    acc, _ = per_class_accuracy(preds, labels, class_set, drop_empty)
    return float(np.mean(list(acc.values())))


def harmonic_mean(mca_s: float, mca_u: float) -> float:
    if mca_s + mca_u == 0:
        return 0.0
    # dividing first avoids underflow of the product for tiny inputs
    return 2.0 * mca_s * (mca_u / (mca_s + mca_u))


def _check_labels_within(batch: "LabeledBatch", allowed, what: str) -> None:
    bad = set(np.unique(batch.labels).tolist()) - set(allowed)
    if bad:
        raise ProtocolError(f"{what} test set contains classes {sorted(bad)} outside the {what} split")


def evaluate_conventional(m: "AlignModel", anchors: "AnchorSet", test: "LabeledBatch",
                          split: SplitSpec, drop_empty: bool = False) -> EvalReport:
    from .align import classify

    if len(test) == 0:
        raise MetricUndefinedError("unseen test set is empty")
    _check_labels_within(test, split.unseen, "unseen")
    preds = classify(m, test.X, anchors, split.unseen)
    acc, counts = per_class_accuracy(preds, test.labels, split.unseen, drop_empty)
    return EvalReport(mode="conventional", per_class=acc, counts=counts,
                      mca=float(np.mean(list(acc.values()))))


def evaluate_generalized(m: "AlignModel", anchors: "AnchorSet", seen_test: "LabeledBatch",
                         unseen_test: "LabeledBatch", split: SplitSpec,
                         drop_empty: bool = False) -> EvalReport:
    from .align import classify

    if len(seen_test) == 0 or len(unseen_test) == 0:
        raise MetricUndefinedError("generalized evaluation needs both seen and unseen test samples")
    _check_labels_within(seen_test, split.seen, "seen")
    _check_labels_within(unseen_test, split.unseen, "unseen")
    everything = split.all_classes
    acc_s, n_s = per_class_accuracy(classify(m, seen_test.X, anchors, everything),
                                    seen_test.labels, split.seen, drop_empty)
    acc_u, n_u = per_class_accuracy(classify(m, unseen_test.X, anchors, everything),
                                    unseen_test.labels, split.unseen, drop_empty)
    mca_s = float(np.mean(list(acc_s.values())))
    mca_u = float(np.mean(list(acc_u.values())))
    return EvalReport(mode="generalized", per_class={**acc_s, **acc_u}, counts={**n_s, **n_u},
                      mca_s=mca_s, mca_u=mca_u, H=harmonic_mean(mca_s, mca_u))
