"""Exact nearest-center search that exploits A_n root structure.

For a root e_i - e_j the inner product with z is z_i - z_j, and after the
drop projection the roots touching the dropped coordinate become the axes
+e_i / -e_j, whose inner products are z_i and -z_j.  Appending a zero to z
for drop-projected sets turns all three cases into z'_i - z'_j.  So the best
root is found from the extreme coordinates of z instead of a scan over all
centers.

Every candidate is re-scored with exactly the arithmetic of
``core.assign_labels_cos`` (``fl(z_i - z_j) / ||C_k||``), and ties go to the
lowest class index, so results are bit-for-bit the brute-force answer.
"""

from __future__ import annotations

import enum
import heapq

import numpy as np

from .core import assign_labels_cos
from .errors import DegenerateInputError, InvalidKError, ShapeError
from .rootsys import (
    CenterConfiguration,
    CenterMatrix,
    Projection,
    ROOT_FAMILIES,
    check_provenance,
)

_EPS = np.finfo(np.float64).eps
_TINY = np.finfo(np.float64).tiny


class Mode(str, enum.Enum):
    FULL_ROOTS = "FullRoots"
    SUBSET_ROOTS = "SubsetRoots"
    BRUTE_FORCE = "BruteForce"


class AssignmentIndex:
    """Immutable lookup structure; build it with :func:`build_index`."""

    def __init__(self, mode: Mode, centers: CenterMatrix, rank=None, projection=Projection.NONE,
                 pair_class=None, pairs=None):
        self.mode = mode
        self.centers = centers
        self.rank = rank
        self.projection = projection
        self.norms = centers.norms
        # (n+1) x (n+1) table: class of root (i, j), or -1
        self.pair_class = pair_class
        # (n_classes, 2) root pair of each class
        self.pairs = pairs
        if pairs is not None:
            self._dropped = projection is Projection.DROP_LAST
            last = rank
            inner = (pairs[:, 0] != last) & (pairs[:, 1] != last)
            if not self._dropped:
                inner[:] = True
            self._inner_pair_class = pair_class.copy()
            outer = np.flatnonzero(~inner)
            self._inner_pair_class[pairs[outer, 0], pairs[outer, 1]] = -1
            self._inner_rows = self._inner_pair_class.tolist()
            plus = outer[pairs[outer, 1] == last]
            minus = outer[pairs[outer, 0] == last]
            self._plus_cls, self._plus_axis = plus, pairs[plus, 0].astype(np.int64)
            self._minus_cls, self._minus_axis = minus, pairs[minus, 1].astype(np.int64)

    def __repr__(self) -> str:
        return f"AssignmentIndex(mode={self.mode.value}, rank={self.rank}, n_classes={self.centers.n_classes})"

    @property
    def n_classes(self) -> int:
        return self.centers.n_classes

    @property
    def pair_to_class(self) -> dict:
        """(i, j) -> class for roots that keep both coordinates."""
        if self.pairs is None:
            return {}
        i, j = np.nonzero(self._inner_pair_class >= 0)
        return {(int(a), int(b)): int(self._inner_pair_class[a, b]) for a, b in zip(i, j)}

    @property
    def axis_to_class(self) -> dict:
        """(+1, i) / (-1, j) -> class for drop-projected roots that became axes."""
        if self.pairs is None:
            return {}
        out = {(1, int(a)): int(c) for a, c in zip(self._plus_axis, self._plus_cls)}
        out.update({(-1, int(a)): int(c) for a, c in zip(self._minus_axis, self._minus_cls)})
        return out


def build_index(cfg: CenterConfiguration, C: CenterMatrix) -> AssignmentIndex:
    """Pick the search mode for ``C`` (the leading rows of ``cfg``)."""
    check_provenance(cfg, C)
    structured = (
        cfg.family in ROOT_FAMILIES
        and cfg.interpolation_level == 0
        and cfg.pairs is not None
        and cfg.projection in (Projection.NONE, Projection.DROP_LAST)
    )
    if not structured:
        return AssignmentIndex(Mode.BRUTE_FORCE, C, rank=cfg.rank, projection=cfg.projection)
    k = C.n_classes
    n1 = cfg.rank + 1
    pairs = np.asarray(cfg.pairs[:k], dtype=np.int64)
    table = np.full((n1, n1), -1, dtype=np.int64)
    table[pairs[:, 0], pairs[:, 1]] = np.arange(k)
    full = k == n1 * (n1 - 1)
    mode = Mode.FULL_ROOTS if full else Mode.SUBSET_ROOTS
    return AssignmentIndex(mode, C, rank=cfg.rank, projection=cfg.projection,
                           pair_class=table, pairs=pairs)


def _prepare(index: AssignmentIndex, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != index.centers.n_dim:
        raise ShapeError(f"query dim {z.shape[0]} != center dim {index.centers.n_dim}")
    if not np.any(z):
        raise DegenerateInputError("query is the zero vector")
    return z


def _extended(index: AssignmentIndex, z: np.ndarray) -> np.ndarray:
    return np.append(z, 0.0) if index._dropped else z


def _pick(classes: np.ndarray, scores: np.ndarray) -> int:
    best = scores.max()
    return int(classes[scores == best].min())


def _bump(stats, key, amount=1):
    if stats is not None:
        stats[key] = stats.get(key, 0) + amount


def _full_roots(index: AssignmentIndex, z: np.ndarray, stats) -> int:
    zx = _extended(index, z)
    hi = zx.max()
    lo = zx.min()
    tol = 16 * _EPS * max(abs(hi), abs(lo)) + _TINY
    window = (zx >= hi - tol) | (zx <= lo + tol)
    _bump(stats, "coordinate_passes", 3)
    near = np.flatnonzero(window)
    top = near[zx[near] >= hi - tol]
    bot = near[zx[near] <= lo + tol]
    ii, jj = np.meshgrid(top, bot, indexing="ij")
    cls = index.pair_class[ii.ravel(), jj.ravel()]
    keep = cls >= 0
    ii, jj, cls = ii.ravel()[keep], jj.ravel()[keep], cls[keep]
    if len(cls) == 0:
        return _brute(index, z)
    scores = (zx[ii] - zx[jj]) / index.norms[cls]
    if index._dropped:
        # axes can win with a larger score than any pair; they sit at the extremes of z
        pc = index._plus_cls[np.isin(index._plus_axis, top)]
        mc = index._minus_cls[np.isin(index._minus_axis, bot)]
        extra = np.concatenate([pc, mc])
        if len(extra):
            ei, ej = index.pairs[extra, 0], index.pairs[extra, 1]
            cls = np.concatenate([cls, extra])
            scores = np.concatenate([scores, (zx[ei] - zx[ej]) / index.norms[extra]])
    return _pick(cls, scores)


def _subset_roots(index: AssignmentIndex, z: np.ndarray, stats) -> int:
    zx = _extended(index, z)
    # pairs that keep both coordinates all have norm sqrt(2): order by z_i - z_j
    zs = z if index._dropped else zx
    desc = np.argsort(-zs, kind="stable").tolist()
    asc = np.argsort(zs, kind="stable").tolist()
    zl = zs.tolist()
    table = index._inner_rows
    limit = index.centers.n_dim ** 2
    tol = 16 * _EPS * float(np.max(np.abs(zs))) + _TINY
    heap = [(-(zl[desc[0]] - zl[asc[0]]), 0, 0)]
    push, pop = heapq.heappush, heapq.heappop
    probes = 0
    found = None
    cand_cls, cand_i, cand_j = [], [], []
    m = len(zl)
    while heap:
        neg, a, b = pop(heap)
        if found is not None and -neg < found - tol:
            break
        probes += 1
        if probes > limit:
            _bump(stats, "fallbacks")
            return _brute(index, z)
        i, j = desc[a], asc[b]
        c = table[i][j] if i != j else -1
        if c >= 0:
            if found is None:
                found = -neg
            cand_cls.append(c)
            cand_i.append(i)
            cand_j.append(j)
        if b + 1 < m:
            push(heap, (-(zl[i] - zl[asc[b + 1]]), a, b + 1))
        if b == 0 and a + 1 < m:
            push(heap, (-(zl[desc[a + 1]] - zl[j]), a + 1, 0))
    _bump(stats, "probes", probes)
    cls = np.array(cand_cls, dtype=np.int64)
    ci, cj = np.array(cand_i, dtype=np.int64), np.array(cand_j, dtype=np.int64)
    scores = (zx[ci] - zx[cj]) / index.norms[cls] if len(cls) else np.empty(0)
    if index._dropped:
        extra = np.concatenate([index._plus_cls, index._minus_cls])
        if len(extra):
            ei, ej = index.pairs[extra, 0], index.pairs[extra, 1]
            cls = np.concatenate([cls, extra])
            scores = np.concatenate([scores, (zx[ei] - zx[ej]) / index.norms[extra]])
    if len(cls) == 0:
        return _brute(index, z)
    return _pick(cls, scores)


def _brute(index: AssignmentIndex, z: np.ndarray) -> int:
    return int(assign_labels_cos(z[None, :], index.centers)[0])


def assign_fast(index: AssignmentIndex, z, stats: dict | None = None) -> int:
    """Class whose center has the largest cosine similarity with ``z``.

    ``stats``, when given, accumulates ``coordinate_passes``, ``probes``
    and ``fallbacks`` counters.
    """
    z = _prepare(index, z)
    if index.mode is Mode.FULL_ROOTS:
        return _full_roots(index, z, stats)
    if index.mode is Mode.SUBSET_ROOTS:
        return _subset_roots(index, z, stats)
    return _brute(index, z)


def assign_batch(index: AssignmentIndex, Z, stats: dict | None = None) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if index.mode is Mode.BRUTE_FORCE:
        return assign_labels_cos(Z, index.centers)
    return np.array([assign_fast(index, z, stats) for z in Z], dtype=np.int64)


def class_scores(index: AssignmentIndex, z) -> np.ndarray:
    """Scores of every class, bit-identical to the brute-force ones."""
    z = _prepare(index, z)
    if index.pairs is None:
        return (index.centers.centers @ z) / index.norms
    zx = _extended(index, z)
    return (zx[index.pairs[:, 0]] - zx[index.pairs[:, 1]]) / index.norms


def assign_topk(index: AssignmentIndex, z, k: int) -> list[int]:
    """The k best classes by cosine similarity, descending, lowest index first on ties."""
    if not 1 <= k <= index.n_classes:
        raise InvalidKError(f"k must be in [1, {index.n_classes}], got {k}")
    scores = class_scores(index, z)
    classes = np.arange(index.n_classes)
    order = np.lexsort((classes, -scores))
    return [int(c) for c in order[:k]]
