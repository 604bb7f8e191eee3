"""Dense linear algebra helpers, seeded initialisation, Adam and a gradient checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
Random streams come from numpy's PCG64 bit generator, which is specified
independently of platform, so a seed reproduces the same values everywhere.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericalError

Mat = np.ndarray
Rng = np.random.Generator


def make_rng(seed: int | Sequence[int]) -> Rng:
    """PCG64 generator; ``seed`` may be a list to derive independent sub-streams."""
    return np.random.Generator(np.random.PCG64(seed))


def as_mat(a, name: str = "matrix") -> Mat:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(a: Mat, name: str = "matrix") -> None:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NumericalError(f"{name} has a non-finite entry at {tuple(int(i) for i in bad)}")


def matmul(a: Mat, b: Mat) -> Mat:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    check_finite(out, "matmul result")
    return out


def frob_norm_sq(a: Mat) -> float:
    return float(np.sum(np.square(a)))


def glorot_init(rng: Rng, rows: int, cols: int) -> Mat:
    """Uniform in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class Adam:
    """Adam with bias correction. Parameters are updated in place.

    ``step`` takes a list of parameter matrices and a matching list of
    gradients. Moment buffers are created lazily on the first step.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: list[Mat] | None = None
        self.v: list[Mat] | None = None
        self.t = 0

    def step(self, params: list[Mat], grads: list[Mat]) -> list[Mat]:
        if len(params) != len(grads):
            raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise DimensionError(f"parameter {i} has shape {p.shape}, gradient {g.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {i}")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif len(self.m) != len(params) or any(m.shape != p.shape for m, p in zip(self.m, params)):
            raise DimensionError("parameter list changed shape between Adam steps")

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return params


def grad_check(loss_fn: Callable[[list[Mat]], float], params: Sequence[Mat],
               analytic_grads: Sequence[Mat], h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    Per entry the error is ``|a - n| / max(1, |a|, |n|)``. ``params`` are not
    modified.
    """
    work = [np.array(p, dtype=np.float64, copy=True) for p in params]
    worst = 0.0
    for k, (p, ga) in enumerate(zip(work, analytic_grads)):
        if p.shape != ga.shape:
            raise DimensionError(f"gradient {k} has shape {ga.shape}, parameter {p.shape}")
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            fp = loss_fn(work)
            p[idx] = orig - h
            fm = loss_fn(work)
            p[idx] = orig
            num = (fp - fm) / (2.0 * h)
            a = float(ga[idx])
            err = abs(a - num) / max(1.0, abs(a), abs(num))
            worst = max(worst, err)
    return worst
