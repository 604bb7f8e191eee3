"""Class-attribute bipartite graph and the diffusion operators defined on it.

Node order is fixed: class nodes ``0..d_C-1`` first, then attribute nodes
``d_C..d_C+d_T-1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, IsolatedNodeError, NegativeWeightError, NumericalError
from .numerics import Mat, as_mat, check_finite


@dataclass(frozen=True)
class BipartiteGraph:
    class_attr: Mat
    adjacency: Mat
    degrees: np.ndarray
    norm_adj: Mat

    @property
    def num_classes(self) -> int:
        return self.class_attr.shape[0]

    @property
    def num_attrs(self) -> int:
        return self.class_attr.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def features(self) -> Mat:
        """Node features: the weighted adjacency itself."""
        return self.adjacency


def validate_class_attr(C) -> Mat:
    C = as_mat(C, "class-attribute matrix")
    neg = np.argwhere(C < 0)
    if len(neg):
        i, j = (int(v) for v in neg[0])
        raise NegativeWeightError(f"class-attribute entry ({i}, {j}) is negative: {C[i, j]!r}")
    empty_rows = np.flatnonzero(~np.any(C > 0, axis=1))
    if len(empty_rows):
        raise IsolatedNodeError(f"class {int(empty_rows[0])} has no positive attribute (isolated node)")
    empty_cols = np.flatnonzero(~np.any(C > 0, axis=0))
    if len(empty_cols):
        raise IsolatedNodeError(f"attribute {int(empty_cols[0])} is used by no class (isolated node)")
    return C


def build_graph(C) -> BipartiteGraph:
    C = validate_class_attr(C)
    dc, dt = C.shape
    n = dc + dt
    A = np.zeros((n, n))
    A[:dc, dc:] = C
    A[dc:, :dc] = C.T
    deg = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    # fill one block and mirror it so S is exactly symmetric
    block = inv_sqrt[:dc, None] * C * inv_sqrt[None, dc:]
    S = np.zeros((n, n))
    S[:dc, dc:] = block
    S[dc:, :dc] = block.T
    for arr in (A, S, deg):
        arr.setflags(write=False)
    C = C.copy()
    C.setflags(write=False)
    return BipartiteGraph(class_attr=C, adjacency=A, degrees=deg, norm_adj=S)


def _check_rows(g: BipartiteGraph, X: Mat, name: str) -> None:
    if X.ndim != 2 or X.shape[0] != g.num_nodes:
        raise DimensionError(f"{name} has shape {X.shape}, expected {g.num_nodes} rows")


def truncated_diffusion(g: BipartiteGraph, alpha: float, p: int, X: Mat) -> Mat:
    """sum_{k=0..p} (alpha*S)^k X, evaluated by Horner's rule."""
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    if p < 0:
        raise DomainError(f"truncation order must be >= 0, got {p}")
    _check_rows(g, X, "X")
    R = np.array(X, dtype=np.float64, copy=True)
    if alpha == 0.0:
        return R
    aS = alpha * g.norm_adj
    for _ in range(p):
        R = X + aS @ R
    return R


def closed_form_diffusion(g: BipartiteGraph, alpha: float, F: Mat) -> Mat:
    """(1 - alpha) (I - alpha S)^{-1} F via a symmetric linear solve."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    _check_rows(g, F, "F")
    K = np.eye(g.num_nodes) - alpha * g.norm_adj
    try:
        H = scipy.linalg.solve(K, (1.0 - alpha) * F, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"diffusion system is singular: {exc}") from exc
    check_finite(H, "closed-form diffusion")
    return H


def diffusion_objective(g: BipartiteGraph, mu: float, H: Mat, F: Mat) -> float:
    """Smoothness over weighted edges plus mu * ||H - F||^2, summed pairwise."""
    _check_rows(g, H, "H")
    if F.shape != H.shape:
        raise DimensionError(f"H has shape {H.shape} but F has shape {F.shape}")
    Hn = H / np.sqrt(g.degrees)[:, None]
    diff = Hn[:, None, :] - Hn[None, :, :]
    smooth = 0.5 * float(np.sum(g.adjacency * np.sum(diff * diff, axis=2)))
    return smooth + mu * float(np.sum((H - F) ** 2))


def diffusion_objective_trace(g: BipartiteGraph, mu: float, H: Mat, F: Mat) -> float:
    """Same objective as :func:`diffusion_objective` in trace form."""
    _check_rows(g, H, "H")
    if F.shape != H.shape:
        raise DimensionError(f"H has shape {H.shape} but F has shape {F.shape}")
    LH = H - g.norm_adj @ H
    return float(np.sum(H * LH)) + mu * float(np.sum((H - F) ** 2))


def diffusion_objective_grad(g: BipartiteGraph, mu: float, H: Mat, F: Mat) -> Mat:
    return 2.0 * (H - g.norm_adj @ H) + 2.0 * mu * (H - F)


def spectral_radius_estimate(M: Mat, iters: int = 500, seed: int = 0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric matrix."""
    v = np.random.Generator(np.random.PCG64(seed)).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        # M^2 has nonnegative spectrum, avoids oscillation between +/- lambda
        w = M @ (M @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = np.sqrt(nrm)
        v = w / nrm
    return float(est)
