"""Stage wiring shared by the CLI and the acceptance checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import data_io
from .align import AlignModel, LabeledBatch, train_align
from .anchors import (
    AnchorModel,
    AnchorSet,
    extract_anchors,
    pca_anchors,
    train_anchor_model,
)
from .config import RunConfig
from .data_io import Dataset
from .errors import FormatError
from .graph import BipartiteGraph, build_graph
from .metrics import EvalReport, evaluate_conventional, evaluate_generalized
from .numerics import make_rng

log = logging.getLogger(__name__)

ANCHOR_STREAM = 1
ALIGN_STREAM = 2


def drop_empty_attributes(ds: Dataset) -> Dataset:
    """Remove attribute columns no class uses, logging a warning."""
    keep = np.any(ds.C > 0, axis=0)
    if keep.all():
        return ds
    log.warning("dropping %d all-zero attribute columns: %s", int((~keep).sum()),
                np.flatnonzero(~keep).tolist())
    names = [n for n, k in zip(ds.attr_names, keep) if k] if ds.attr_names else None
    return Dataset(X=ds.X, labels=ds.labels, C=ds.C[:, keep], split=ds.split,
                   class_names=ds.class_names, attr_names=names)


def seen_holdout_mask(labels: np.ndarray, seen, frac: float) -> np.ndarray:
    """Mark the last ``round(frac * n_c)`` samples (file order) of every seen class.

    Held-out samples are excluded from alignment training and serve as the
    seen test set in the generalized protocol.
    """
    mask = np.zeros(labels.shape[0], dtype=bool)
    for c in seen:
        idx = np.flatnonzero(labels == c)
        k = int(round(frac * idx.size))
        if k:
            mask[idx[-k:]] = True
    return mask


def training_batch(ds: Dataset, holdout: float) -> LabeledBatch:
    seen = np.isin(ds.labels, ds.split.seen)
    train = seen & ~seen_holdout_mask(ds.labels, ds.split.seen, holdout)
    return LabeledBatch.from_labels(ds.X[train], ds.labels[train], ds.num_classes)


def eval_batches(ds: Dataset, holdout: float) -> tuple[LabeledBatch, LabeledBatch]:
    """(held-out seen samples, all unseen samples)."""
    held = seen_holdout_mask(ds.labels, ds.split.seen, holdout)
    unseen = np.isin(ds.labels, ds.split.unseen)
    mk = lambda m: LabeledBatch.from_labels(ds.X[m], ds.labels[m], ds.num_classes)  # noqa: E731
    return mk(held), mk(unseen)


def run_anchor_stage(g: BipartiteGraph, cfg: RunConfig) -> tuple[AnchorSet, AnchorModel | None]:
    if cfg.pca_anchors:
        return pca_anchors(g, cfg.resolved_anchor_dim(), cfg.normalize_anchors), None
    model = train_anchor_model(g, cfg.anchor_config(), make_rng([cfg.seed, ANCHOR_STREAM]))
    return extract_anchors(model, g), model


def run_align_stage(ds: Dataset, anchors: AnchorSet, cfg: RunConfig) -> AlignModel:
    batch = training_batch(ds, cfg.holdout)
    return train_align(batch, anchors, ds.C, cfg.align_config(),
                       make_rng([cfg.seed, ALIGN_STREAM]), allowed_classes=ds.split.seen)


def evaluate(ds: Dataset, anchors: AnchorSet, model: AlignModel, cfg: RunConfig) -> EvalReport:
    seen_test, unseen_test = eval_batches(ds, cfg.holdout)
    if cfg.mode == "conventional":
        return evaluate_conventional(model, anchors, unseen_test, ds.split, cfg.drop_empty)
    return evaluate_generalized(model, anchors, seen_test, unseen_test, ds.split, cfg.drop_empty)


@dataclass
class PipelineResult:
    anchors: AnchorSet
    anchor_model: AnchorModel | None
    align_model: AlignModel
    report: EvalReport


def run_pipeline(ds: Dataset, cfg: RunConfig) -> PipelineResult:
    if cfg.drop_empty_attrs:
        ds = drop_empty_attributes(ds)
    g = build_graph(ds.C)
    anchors, amodel = run_anchor_stage(g, cfg)
    model = run_align_stage(ds, anchors, cfg)
    return PipelineResult(anchors, amodel, model, evaluate(ds, anchors, model, cfg))


# -- checkpoints ----------------------------------------------------------------

def save_anchor_checkpoint(path, anchors: AnchorSet, model: AnchorModel | None,
                           cfg: RunConfig, num_attrs: int) -> None:
    header = {"kind": "pca" if model is None else "gcn", "num_classes": anchors.num_classes,
              "num_attrs": num_attrs, "dim": anchors.dim, "alpha": repr(cfg.alpha), "p": cfg.p,
              "normalize": int(cfg.normalize_anchors)}
    mats = {"U": anchors.U}
    if model is not None:
        header["activations"] = ",".join(model.activations)
        header["depth"] = model.depth
        mats.update({f"W{i}": w for i, w in enumerate(model.weights)})
    data_io.save_checkpoint(path, header, mats)


def load_anchor_checkpoint(path) -> tuple[AnchorSet, AnchorModel | None, dict]:
    header, mats = data_io.load_checkpoint(path)
    try:
        nc = int(header["num_classes"])
        U = mats["U"]
        model = None
        if header.get("kind") == "gcn":
            depth = int(header["depth"])
            model = AnchorModel(weights=[mats[f"W{i}"] for i in range(depth)],
                                activations=header["activations"].split(","),
                                alpha=float(header["alpha"]), p=int(header["p"]),
                                normalize=bool(int(header["normalize"])))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete anchor checkpoint ({exc})") from None
    return AnchorSet(U=U, num_classes=nc), model, header


def save_align_checkpoint(path, model: AlignModel) -> None:
    header = {"lambda1": repr(model.lambda1), "lambda2": repr(model.lambda2),
              "reg_enabled": int(model.reg_enabled), "tied_weights": int(model.tied_weights),
              "normalize_loss": int(model.normalize_loss),
              "cosine_scores": int(model.cosine_scores)}
    data_io.save_checkpoint(path, header, {"W_cons": model.W_cons, "W_recons": model.recons,
                                           "M": model.M})


def load_align_checkpoint(path) -> AlignModel:
    header, mats = data_io.load_checkpoint(path)
    try:
        return AlignModel(W_cons=mats["W_cons"], W_recons=mats["W_recons"], M=mats["M"],
                          lambda1=float(header["lambda1"]), lambda2=float(header["lambda2"]),
                          reg_enabled=bool(int(header["reg_enabled"])),
                          tied_weights=bool(int(header["tied_weights"])),
                          normalize_loss=bool(int(header["normalize_loss"])),
                          cosine_scores=bool(int(header["cosine_scores"])))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete alignment checkpoint ({exc})") from None

