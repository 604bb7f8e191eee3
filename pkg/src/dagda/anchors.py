"""Anchor generation: a graph auto-encoder whose layers propagate with the
truncated diffusion operator, plus a PCA baseline.

Each layer computes ``act(P @ U @ W)`` with ``P = sum_{k<=p} (alpha S)^k``.
The encoder output (middle layer) gives one anchor row per graph node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .graph import BipartiteGraph, truncated_diffusion
from .numerics import Adam, Mat, Rng, check_finite, glorot_init

ACTIVATIONS = ("linear", "tanh", "relu")

# Anchor widths used for the public benchmarks, keyed by lower-case name.
DATASET_ANCHOR_DIMS = {"awa2": 32, "cub": 256, "sun": 64, "apy": 64}


def activate(kind: str, z: Mat) -> Mat:
    if kind == "linear":
        return z
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    raise ConfigError(f"unknown activation {kind!r}; choose from {ACTIVATIONS}")


def activate_grad(kind: str, z: Mat, out: Mat) -> Mat:
    if kind == "linear":
        return np.ones_like(z)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    raise ConfigError(f"unknown activation {kind!r}")


@dataclass
class AnchorConfig:
    dim: int = 16
    epochs: int = 1000
    lr: float = 1e-3
    alpha: float = 0.8
    p: int = 2
    hidden_activation: str = "tanh"
    output_activation: str = "linear"
    extra_layers: tuple[int, ...] = ()
    normalize: bool = False


@dataclass
class AnchorModel:
    weights: list[Mat]
    activations: list[str]
    alpha: float
    p: int
    normalize: bool = False
    loss_trace: list[float] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def anchor_layer(self) -> int:
        """Index into the activation list (0 = input) of the anchor layer."""
        return self.depth // 2

    @property
    def dim(self) -> int:
        return self.weights[self.anchor_layer - 1].shape[1]


@dataclass(frozen=True)
class AnchorSet:
    U: Mat
    num_classes: int

    @property
    def class_rows(self) -> Mat:
        return self.U[: self.num_classes]

    @property
    def attr_rows(self) -> Mat:
        return self.U[self.num_classes:]

    @property
    def dim(self) -> int:
        return self.U.shape[1]


def layer_widths(n_nodes: int, cfg: AnchorConfig) -> list[int]:
    enc = [n_nodes, *cfg.extra_layers, cfg.dim]
    return enc + enc[-2::-1]


def init_anchor_model(g: BipartiteGraph, cfg: AnchorConfig, rng: Rng) -> AnchorModel:
    n = g.num_nodes
    if not 1 <= cfg.dim < n:
        raise ConfigError(f"anchor dim must be in [1, {n - 1}] for a {n}-node graph, got {cfg.dim}")
    if cfg.epochs < 1:
        raise ConfigError("anchor epochs must be >= 1")
    if not 0.0 <= cfg.alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {cfg.alpha}")
    for kind in (cfg.hidden_activation, cfg.output_activation):
        if kind not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {kind!r}")
    widths = layer_widths(n, cfg)
    weights = [glorot_init(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
    acts = [cfg.hidden_activation] * (len(weights) - 1) + [cfg.output_activation]
    return AnchorModel(weights=weights, activations=acts, alpha=cfg.alpha, p=cfg.p,
                       normalize=cfg.normalize)


def _forward_all(model: AnchorModel, g: BipartiteGraph, F: Mat):
    """Diffused inputs, pre-activations and activations of every layer."""
    if F.shape[0] != g.num_nodes or F.shape[1] != model.weights[0].shape[0]:
        raise DimensionError(
            f"features have shape {F.shape}, model expects ({g.num_nodes}, {model.weights[0].shape[0]})")
    diffused, pre, acts = [], [], [F]
    for W, kind in zip(model.weights, model.activations):
        D = truncated_diffusion(g, model.alpha, model.p, acts[-1])
        Z = D @ W
        diffused.append(D)
        pre.append(Z)
        acts.append(activate(kind, Z))
    return diffused, pre, acts


def forward(model: AnchorModel, g: BipartiteGraph, F: Mat) -> tuple[Mat, Mat]:
    """Return (anchor-layer activations, reconstruction)."""
    _, _, acts = _forward_all(model, g, F)
    return acts[model.anchor_layer], acts[-1]


def anchor_loss(model: AnchorModel, g: BipartiteGraph, F: Mat) -> tuple[float, list[Mat]]:
    """Mean-over-nodes squared reconstruction error and its weight gradients."""
    diffused, pre, acts = _forward_all(model, g, F)
    n = F.shape[0]
    resid = acts[-1] - F
    loss = float(np.sum(resid * resid)) / n
    check_finite(np.array([[loss]]), "anchor loss")

    grads: list[Mat] = [None] * model.depth  # type: ignore[list-item]
    d_act = 2.0 * resid / n
    for l in range(model.depth - 1, -1, -1):
        dZ = d_act * activate_grad(model.activations[l], pre[l], acts[l + 1])
        grads[l] = diffused[l].T @ dZ
        if l > 0:
            # the diffusion polynomial is symmetric, so its adjoint is itself
            d_act = truncated_diffusion(g, model.alpha, model.p, dZ @ model.weights[l].T)
    return loss, grads


def train_anchor_model(g: BipartiteGraph, cfg: AnchorConfig, rng: Rng,
                       init_weights: list[Mat] | None = None) -> AnchorModel:
    """Full-batch Adam on the reconstruction loss; one step per epoch.

    ``loss_trace`` holds the loss before every step plus the final loss
    (``epochs + 1`` values).
    """
    model = init_anchor_model(g, cfg, rng)
    if init_weights is not None:
        if [w.shape for w in init_weights] != [w.shape for w in model.weights]:
            raise DimensionError("init_weights do not match the configured architecture")
        model.weights = [np.array(w, dtype=np.float64, copy=True) for w in init_weights]
    F = g.features
    opt = Adam(lr=cfg.lr)
    trace = []
    for _ in range(cfg.epochs):
        loss, grads = anchor_loss(model, g, F)
        trace.append(loss)
        opt.step(model.weights, grads)
    trace.append(anchor_loss(model, g, F)[0])
    model.loss_trace = trace
    return model


def _maybe_normalize(U: Mat, normalize: bool) -> Mat:
    if not normalize:
        return U
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    return U / np.where(norms > 0.0, norms, 1.0)


def extract_anchors(model: AnchorModel, g: BipartiteGraph) -> AnchorSet:
    hidden, _ = forward(model, g, g.features)
    U = _maybe_normalize(np.array(hidden), model.normalize)
    check_finite(U, "anchors")
    return AnchorSet(U=U, num_classes=g.num_classes)


def pca_anchors(g: BipartiteGraph, d: int, normalize: bool = False) -> AnchorSet:
    """Project node features onto their top-``d`` principal components.

    Each component's largest-magnitude entry is made positive so the result
    is deterministic.
    """
    F = g.features
    if not 1 <= d <= min(F.shape):
        raise ConfigError(f"PCA dim must be in [1, {min(F.shape)}], got {d}")
    Xc = F - F.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:d]
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d), lead])
    comps = comps * signs[:, None]
    U = _maybe_normalize(Xc @ comps.T, normalize)
    return AnchorSet(U=U, num_classes=g.num_classes)
