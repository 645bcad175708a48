"""Metrics, losses, gradients and label functions for center matching."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, LabelRangeError, ShapeError
from .rootsys import CenterMatrix

# rows of Z per block when scoring against all centers
_SCORE_BLOCK_ELEMS = 1 << 22

_gather_log: list | None = None


@dataclass(frozen=True)
class LossValue:
    """A batch loss.

    For the cosine loss ``value`` is the mean of ``per_sample``; for the
    distance and combined losses ``per_sample`` holds each sample's
    contribution and ``value`` is their sum.
    """

    value: float
    per_sample: np.ndarray


@contextlib.contextmanager
def track_gather():
    """Record the shape of every array allocated by gather_centers inside the block."""
    global _gather_log
    previous = _gather_log
    _gather_log = log = []
    try:
        yield log
    finally:
        _gather_log = previous


def _as_2d(Z) -> np.ndarray:
    Z = np.asarray(Z)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {Z.shape}")
    return Z


def _check_nonzero_rows(Z: np.ndarray, what: str = "embedding") -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise DegenerateInputError(f"{what} row {zero[0]} is the zero vector")
    return norms


def check_labels(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels).reshape(-1)
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ConfigurationError("labels must be integers")
    y = y.astype(np.int64)
    bad = np.flatnonzero((y < 0) | (y >= n_classes))
    if len(bad):
        raise LabelRangeError(int(bad[0]), int(y[bad[0]]), n_classes)
    return y


def cos_sim(a, b) -> float:
    """Cosine similarity of two non-zero vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cos_dist(a, b) -> float:
    return 1.0 - cos_sim(a, b)


def gather_centers(C: CenterMatrix, labels, dtype=None) -> np.ndarray:
    """Rows ``C[labels[j]]``; allocates b_s x n_dim whatever n_classes is."""
    y = check_labels(labels, C.n_classes)
    out = C.rows(y)
    if dtype is not None and out.dtype != dtype:
        out = out.astype(dtype)
    if _gather_log is not None:
        _gather_log.append(out.shape)
    return out


def _row_cos(Z: np.ndarray, Cb: np.ndarray):
    if Z.shape != Cb.shape:
        raise ShapeError(f"embeddings {Z.shape} and centers {Cb.shape} differ in shape")
    zn = _check_nonzero_rows(Z)
    cn = _check_nonzero_rows(Cb, "center")
    dots = np.einsum("ij,ij->i", Z, Cb)
    return dots, zn, cn


def cos_loss(Z, Cb) -> LossValue:
    """1 - mean cosine similarity between embeddings and their gathered centers."""
    Z = _as_2d(Z)
    Cb = _as_2d(Cb)
    dots, zn, cn = _row_cos(Z, Cb)
    per = 1.0 - np.clip(dots / (zn * cn), -1.0, 1.0)
    return LossValue(float(per.mean()), per)


def cos_loss_grad(Z, Cb) -> np.ndarray:
    """Analytic gradient of cos_loss with respect to Z."""
    Z = _as_2d(Z)
    Cb = _as_2d(Cb)
    dots, zn, cn = _row_cos(Z, Cb)
    b_s = Z.shape[0]
    g = Cb / (zn * cn)[:, None] - (dots / (zn**3 * cn))[:, None] * Z
    return -g / b_s


def fd(x, r_c):
    """Radius loss exp(relu(x - r_c)) - 1: zero inside the ball, growing outside."""
    x = np.asarray(x, dtype=np.float64)
    out = np.expm1(np.maximum(x - r_c, 0.0))
    return float(out) if out.ndim == 0 else out


def _dist_parts(Z, labels, C: CenterMatrix):
    Z = _as_2d(Z)
    y = check_labels(labels, C.n_classes)
    if len(y) != Z.shape[0]:
        raise ShapeError(f"{Z.shape[0]} embeddings but {len(y)} labels")
    return Z, gather_centers(C, y), C.radius(y)


def _distances(Z: np.ndarray, Cb: np.ndarray):
    if Z.shape != Cb.shape:
        raise ShapeError(f"embeddings {Z.shape} and centers {Cb.shape} differ in shape")
    diff = Z - Cb
    return diff, np.sqrt(np.einsum("ij,ij->i", diff, diff))


def dist_loss_gathered(Z, Cb, radii) -> LossValue:
    """dist_loss on centers already gathered for the batch (``radii`` per row)."""
    _, d = _distances(_as_2d(Z), _as_2d(Cb))
    with np.errstate(over="ignore"):  # divergence is reported by the caller
        per = np.expm1(np.maximum(d - radii, 0.0))
    return LossValue(float(per.sum()), per)


def dist_loss_grad_gathered(Z, Cb, radii) -> np.ndarray:
    diff, d = _distances(_as_2d(Z), _as_2d(Cb))
    radii = np.broadcast_to(radii, d.shape)
    outside = d > radii
    scale = np.zeros_like(d)
    with np.errstate(over="ignore", invalid="ignore"):
        scale[outside] = np.exp(d[outside] - radii[outside]) / d[outside]
    return scale[:, None] * diff


def dist_loss(Z, labels, C: CenterMatrix) -> LossValue:
    """Sum over the batch of fd(||z_j - C[y_j]||, r_{y_j})."""
    return dist_loss_gathered(*_dist_parts(Z, labels, C))


def dist_loss_grad(Z, labels, C: CenterMatrix) -> np.ndarray:
    return dist_loss_grad_gathered(*_dist_parts(Z, labels, C))


def _check_weights(weight_dist: float, weight_cos: float) -> None:
    if weight_dist < 0 or weight_cos < 0:
        raise ConfigurationError("loss weights must be non-negative")
    if weight_dist == 0 and weight_cos == 0:
        raise ConfigurationError("at least one loss weight must be positive")


def combined_loss(Z, labels, C: CenterMatrix, weight_dist: float = 1.0, weight_cos: float = 1.0) -> LossValue:
    """weight_dist * dist_loss + weight_cos * cos_loss."""
    _check_weights(weight_dist, weight_cos)
    return combined_loss_gathered(*_dist_parts(Z, labels, C), weight_dist, weight_cos)


def combined_loss_grad(Z, labels, C: CenterMatrix, weight_dist: float = 1.0, weight_cos: float = 1.0) -> np.ndarray:
    _check_weights(weight_dist, weight_cos)
    return combined_loss_grad_gathered(*_dist_parts(Z, labels, C), weight_dist, weight_cos)


def combined_loss_gathered(Z, Cb, radii, weight_dist: float = 1.0, weight_cos: float = 1.0) -> LossValue:
    _check_weights(weight_dist, weight_cos)
    Z = _as_2d(Z)
    per = np.zeros(Z.shape[0])
    if weight_dist:
        per = per + weight_dist * dist_loss_gathered(Z, Cb, radii).per_sample
    if weight_cos:
        per = per + weight_cos * cos_loss(Z, Cb).per_sample / Z.shape[0]
    return LossValue(float(per.sum()), per)


def combined_loss_grad_gathered(Z, Cb, radii, weight_dist: float = 1.0, weight_cos: float = 1.0) -> np.ndarray:
    _check_weights(weight_dist, weight_cos)
    Z = _as_2d(Z)
    g = np.zeros(Z.shape, dtype=np.float64)
    if weight_dist:
        g += weight_dist * dist_loss_grad_gathered(Z, Cb, radii)
    if weight_cos:
        g += weight_cos * cos_loss_grad(Z, Cb)
    return g


def _blocks(m: int, k: int):
    step = max(1, _SCORE_BLOCK_ELEMS // max(k, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def cos_scores(Z, C: CenterMatrix) -> np.ndarray:
    """z . C_i / ||C_i|| for every row of Z and every class.

    Dividing by ||z|| as well would not change any argmax, so it is left out;
    this keeps the scores bit-reproducible by the structured search in
    fastassign.
    """
    Z = _as_2d(Z)
    return (Z @ C.centers.T) / C.norms


def assign_labels_cos(Z, C: CenterMatrix) -> np.ndarray:
    """argmax_i cos_sim(z_j, C_i), lowest class index on ties."""
    Z = _as_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != C.n_dim:
        raise ShapeError(f"embedding dim {Z.shape[1]} != center dim {C.n_dim}")
    _check_nonzero_rows(Z)
    out = np.empty(Z.shape[0], dtype=np.int64)
    centers_t = C.centers.T
    norms = C.norms
    for blk in _blocks(Z.shape[0], C.n_classes):
        out[blk] = np.argmax((Z[blk] @ centers_t) / norms, axis=1)
    return out


def assign_labels_dist(Z, C: CenterMatrix) -> np.ndarray:
    """argmin_i ||z_j - C_i||, lowest class index on ties."""
    Z = _as_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != C.n_dim:
        raise ShapeError(f"embedding dim {Z.shape[1]} != center dim {C.n_dim}")
    centers = C.centers
    out = np.empty(Z.shape[0], dtype=np.int64)
    for blk in _blocks(Z.shape[0], C.n_classes * C.n_dim):
        diff = Z[blk, None, :] - centers[None, :, :]
        out[blk] = np.argmin(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), axis=1)
    return out
