"""Predefined center-vector systems built from the A_n root system.

Root configurations are stored sparsely: each vector is a short list of
(coordinate, coefficient) entries in the unprojected (n+1)-dimensional
space, and the projection is applied when rows are materialized.  This
keeps a 147,840-root A_384 configuration at a few megabytes, and lets a
CenterMatrix hand out only the rows a batch actually needs.
"""

from __future__ import annotations

import enum
import math
from functools import cached_property

import numpy as np

from .errors import (
    CapacityError,
    InconsistentProvenanceError,
    InvalidInputError,
    InvalidRankError,
    InvalidStateError,
    UnsupportedLevelError,
)

SQRT2 = math.sqrt(2.0)


class Family(str, enum.Enum):
    AN = "An"
    ANP = "Anp"
    ANR = "Anr"
    ROTATION_2D = "Rotation2D"
    CEEMBS = "CEembs"
    CUSTOM = "Custom"


class Projection(str, enum.Enum):
    NONE = "None"
    DROP_LAST = "DropLast"
    ISOMETRIC = "Isometric"


ROOT_FAMILIES = (Family.AN, Family.ANP, Family.ANR)


class CenterConfiguration:
    """An ordered family of center vectors plus the provenance needed to rebuild it.

    Root families keep ``support``/``coeffs`` (sparse rows in n+1 dims) and,
    before interpolation, ``pairs`` (the (i, j) of each root e_i - e_j).
    Other families keep a dense matrix.
    """

    def __init__(
        self,
        family: Family,
        *,
        rank: int | None = None,
        projection: Projection = Projection.NONE,
        seed: int | None = None,
        interpolation_level: int = 0,
        permutation: np.ndarray | None = None,
        positive_only: bool = False,
        support: np.ndarray | None = None,
        coeffs: np.ndarray | None = None,
        pairs: np.ndarray | None = None,
        dense: np.ndarray | None = None,
        basis: np.ndarray | None = None,
        n_roots: int | None = None,
    ):
        self.family = Family(family)
        self.rank = rank
        self.projection = Projection(projection)
        self.seed = seed
        self.interpolation_level = int(interpolation_level)
        self.permutation = None if permutation is None else np.asarray(permutation, dtype=np.int64)
        self.positive_only = positive_only
        self.support = support
        self.coeffs = coeffs
        self.pairs = pairs
        self.basis = basis
        self.n_roots = n_roots
        if dense is not None:
            dense = np.array(dense, dtype=np.float64)
            dense.setflags(write=False)
            if dense.ndim != 2 or dense.shape[0] == 0:
                raise InvalidInputError("vectors must form a non-empty 2-D array")
            if np.any(~np.isfinite(dense)):
                raise InvalidInputError("vectors must be finite")
            if np.any(np.all(dense == 0, axis=1)):
                raise InvalidInputError("zero vector in configuration")
        self.dense = dense
        if dense is None and support is None:
            raise InvalidInputError("configuration needs either dense or sparse vectors")
        if self.permutation is not None:
            # shuffles reorder the roots; interpolated vectors keep their canonical order
            m = self.n_roots if self.n_roots is not None else len(self)
            if self.permutation.shape != (m,) or not np.array_equal(
                np.sort(self.permutation), np.arange(m)
            ):
                raise InvalidInputError("permutation is not a permutation of 0..len-1")

    @classmethod
    def from_vectors(cls, vectors, family: Family = Family.CUSTOM, **meta) -> "CenterConfiguration":
        return cls(family, dense=vectors, **meta)

    def __len__(self) -> int:
        if self.dense is not None:
            return self.dense.shape[0]
        return self.support.shape[0] + self.n_interpolated

    @property
    def n_interpolated(self) -> int:
        """Size of the implicit block of interpolated vectors after the roots."""
        if self.interpolation_level == 0 or self.dense is not None:
            return 0
        n = self.rank
        return n * (n * n - 1)

    def interpolated_terms(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Support (k, 3) and coefficients (k, 3) of interpolated vectors at absolute positions ``idx``.

        Position ``n_roots + t`` decodes as: kind = t // T, where
        T = (n+1) * C(n, 2); then the shared index i and the unordered pair
        j < l of the remaining indices, all in lexicographic order.  Kind 0
        is (2 e_i - e_j - e_l) / sqrt(3), the midpoint direction of
        e_i - e_j and e_i - e_l; kind 1 is (e_j + e_l - 2 e_i) / sqrt(3),
        that of e_j - e_i and e_l - e_i.
        """
        t = np.asarray(idx, dtype=np.int64).reshape(-1) - self.support.shape[0]
        if np.any((t < 0) | (t >= self.n_interpolated)):
            raise InvalidInputError("index outside the interpolated block")
        n = self.rank
        per_i = n * (n - 1) // 2
        per_kind = (n + 1) * per_i
        kind, r = np.divmod(t, per_kind)
        i, q = np.divmod(r, per_i)
        # invert q = a*n - a*(a+1)/2 + (b - a - 1) for a < b < n
        c = 2 * n - 1
        a = np.floor((c - np.sqrt(np.maximum(c * c - 8.0 * q, 0.0))) / 2).astype(np.int64)
        off = lambda x: x * n - x * (x + 1) // 2
        a = np.where(off(a) > q, a - 1, a)
        a = np.where(off(a + 1) <= q, a + 1, a)
        b = q - off(a) + a + 1
        j = a + (a >= i)
        l = b + (b >= i)
        s = 1.0 / math.sqrt(3.0)
        sign = np.where(kind == 0, 1.0, -1.0)[:, None]
        sup = np.stack([i, j, l], axis=1).astype(np.int32)
        coef = sign * np.array([2.0 * s, -s, -s])
        return sup, coef

    def __repr__(self) -> str:
        return (
            f"CenterConfiguration(family={self.family.value}, rank={self.rank}, "
            f"n_vectors={len(self)}, ambient_dim={self.ambient_dim}, "
            f"projection={self.projection.value}, interpolation_level={self.interpolation_level})"
        )

    @property
    def ambient_dim(self) -> int:
        if self.dense is not None:
            return self.dense.shape[1]
        if self.projection is Projection.NONE:
            return self.rank + 1
        return self.rank

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    def _replace(self, **changes) -> "CenterConfiguration":
        fields = dict(
            family=self.family,
            rank=self.rank,
            projection=self.projection,
            seed=self.seed,
            interpolation_level=self.interpolation_level,
            permutation=self.permutation,
            positive_only=self.positive_only,
            support=self.support,
            coeffs=self.coeffs,
            pairs=self.pairs,
            dense=self.dense,
            basis=self.basis,
            n_roots=self.n_roots,
        )
        fields.update(changes)
        return CenterConfiguration(**fields)

    def _unprojected_rows(self, idx: np.ndarray) -> np.ndarray:
        if np.any((idx < 0) | (idx >= len(self))):
            raise IndexError(f"vector index out of range for {len(self)} vectors")
        base = self.support.shape[0]
        extra = idx >= base
        if extra.any():
            # pad root rows to the three-term width of interpolated rows
            width = 3
            sup = np.full((len(idx), width), -1, dtype=np.int32)
            coef = np.zeros((len(idx), width))
            root = ~extra
            sup[root, : self.support.shape[1]] = self.support[idx[root]]
            coef[root, : self.coeffs.shape[1]] = self.coeffs[idx[root]]
            sup[extra], coef[extra] = self.interpolated_terms(idx[extra])
        else:
            sup = self.support[idx]
            coef = self.coeffs[idx]
        out = np.zeros((len(idx), self.rank + 1))
        rows = np.broadcast_to(np.arange(len(idx))[:, None], sup.shape)
        mask = sup >= 0
        out[rows[mask], sup[mask]] = coef[mask]
        return out

    def rows(self, idx) -> np.ndarray:
        """Materialize the vectors at positions ``idx`` as a float64 array."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        if self.dense is not None:
            return self.dense[idx]
        full = self._unprojected_rows(idx)
        if self.projection is Projection.DROP_LAST:
            return np.ascontiguousarray(full[:, :-1])
        if self.projection is Projection.ISOMETRIC:
            return full @ self.basis
        return full

    @cached_property
    def vectors(self) -> np.ndarray:
        v = self.rows(np.arange(len(self)))
        v.setflags(write=False)
        return v


def gen_an_roots(n: int) -> CenterConfiguration:
    """All n(n+1) roots e_i - e_j (i != j) of A_n, ordered lexicographically by (i, j)."""
    if int(n) != n or n < 1:
        raise InvalidRankError(f"rank must be a positive integer, got {n}")
    n = int(n)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i != j
    pairs = np.stack([i[keep], j[keep]], axis=1).astype(np.int32)
    coeffs = np.tile(np.array([1.0, -1.0]), (len(pairs), 1))
    return CenterConfiguration(
        Family.AN, rank=n, support=pairs.copy(), coeffs=coeffs, pairs=pairs, n_roots=len(pairs)
    )


def _require_unprojected(cfg: CenterConfiguration) -> None:
    if cfg.projection is not Projection.NONE:
        raise InvalidStateError(f"configuration is already projected ({cfg.projection.value})")


def project_drop(cfg: CenterConfiguration) -> CenterConfiguration:
    """Drop the last coordinate of every vector."""
    _require_unprojected(cfg)
    if cfg.ambient_dim < 2:
        raise InvalidInputError("cannot drop a coordinate from 1-dimensional vectors")
    if cfg.dense is not None:
        dropped = cfg.dense[:, :-1]
        zero = np.flatnonzero(np.all(dropped == 0, axis=1))
        if len(zero):
            raise InvalidInputError(f"drop projection maps vector {zero[0]} to zero")
        return cfg._replace(dense=dropped, projection=Projection.DROP_LAST)
    last = cfg.rank
    live = (cfg.support >= 0) & (cfg.support != last) & (cfg.coeffs != 0)
    if np.any(~live.any(axis=1)):
        raise InvalidInputError("drop projection produces a zero vector")
    return cfg._replace(projection=Projection.DROP_LAST)


def sum_zero_basis(n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the sum-zero hyperplane of R^(n+1).

    Gram-Schmidt over the simple roots e_i - e_{i+1} in index order.
    """
    simple = np.zeros((n + 1, n))
    simple[np.arange(n), np.arange(n)] = 1.0
    simple[np.arange(1, n + 1), np.arange(n)] = -1.0
    q, r = np.linalg.qr(simple)
    # QR is Gram-Schmidt up to column signs; pin them so diag(R) > 0
    return q * np.sign(np.diag(r))


def project_isometric(cfg: CenterConfiguration) -> CenterConfiguration:
    """Re-express vectors in an orthonormal basis of the sum-zero hyperplane."""
    if cfg.family not in ROOT_FAMILIES:
        raise InvalidInputError(f"isometric projection needs an A_n family, got {cfg.family.value}")
    _require_unprojected(cfg)
    sums = np.where(cfg.support >= 0, cfg.coeffs, 0.0).sum(axis=1)
    if np.any(np.abs(sums) > 1e-12):
        raise InvalidInputError("vectors do not lie in the sum-zero hyperplane")
    return cfg._replace(projection=Projection.ISOMETRIC, basis=sum_zero_basis(cfg.rank))


def positive_subset(cfg: CenterConfiguration) -> CenterConfiguration:
    """Keep the positive roots e_i - e_j with i < j."""
    if cfg.family is not Family.AN or cfg.pairs is None or cfg.interpolation_level:
        raise InvalidInputError(f"positive subset needs an uninterpolated A_n, got {cfg.family.value}")
    keep = np.flatnonzero(cfg.pairs[:, 0] < cfg.pairs[:, 1])
    return cfg._replace(
        family=Family.ANP,
        support=cfg.support[keep],
        coeffs=cfg.coeffs[keep],
        pairs=cfg.pairs[keep],
        positive_only=True,
        n_roots=len(keep),
    )


def shuffle(cfg: CenterConfiguration, seed: int) -> CenterConfiguration:
    """Reorder the full vector list by a permutation drawn from ``seed``."""
    if cfg.family not in (Family.AN, Family.ANP):
        raise InvalidInputError(f"shuffle needs An or Anp, got {cfg.family.value}")
    if cfg.interpolation_level:
        raise InvalidStateError("shuffle the roots before interpolating")
    perm = np.random.default_rng(seed).permutation(len(cfg))
    changes = dict(family=Family.ANR, seed=int(seed), permutation=perm)
    if cfg.dense is not None:
        changes["dense"] = cfg.dense[perm]
    else:
        changes["support"] = cfg.support[perm]
        changes["coeffs"] = cfg.coeffs[perm]
        if cfg.pairs is not None:
            changes["pairs"] = cfg.pairs[perm]
    return cfg._replace(**changes)


def sixty_degree_pairs(pairs: np.ndarray, rank: int) -> np.ndarray:
    """Positions (a, b), a < b, of roots at 60 degrees, sorted lexicographically.

    Two roots e_i - e_j and e_k - e_l have inner product 1 exactly when they
    share the positive index (i = k) or the negative index (j = l).
    """
    m = len(pairs)
    pos = np.full((rank + 1, rank + 1), -1, dtype=np.int64)
    pos[pairs[:, 0], pairs[:, 1]] = np.arange(m)
    same_pos = pos[pairs[:, 0], :]
    same_neg = pos[:, pairs[:, 1]].T
    cand = np.concatenate([same_pos, same_neg], axis=1)
    a = np.broadcast_to(np.arange(m)[:, None], cand.shape)
    keep = cand > a
    a, b = a[keep], cand[keep]
    order = np.lexsort((b, a))
    return np.stack([a[order], b[order]], axis=1)


def count_interpolated(cfg: CenterConfiguration) -> int:
    """Number of vectors one interpolation level would append, without building them."""
    if cfg.pairs is None:
        raise InvalidInputError("interpolation counts need an uninterpolated root configuration")
    n1 = cfg.rank + 1
    first = np.bincount(cfg.pairs[:, 0], minlength=n1).astype(np.int64)
    second = np.bincount(cfg.pairs[:, 1], minlength=n1).astype(np.int64)
    per_root = (first[cfg.pairs[:, 0]] - 1) + (second[cfg.pairs[:, 1]] - 1)
    return int(per_root.sum() // 2)


def interpolate(cfg: CenterConfiguration, levels: int) -> CenterConfiguration:
    """Append norm-sqrt(2) midpoints of every pair of roots at 60 degrees.

    Each appended vector sits at 30 degrees from both parents.  The
    appended block is implicit (see ``interpolated_terms``), so even
    A_384 with its 56.6M extra vectors costs no memory until rows are
    requested.  Only one level is supported.
    """
    if levels < 0:
        raise UnsupportedLevelError("interpolation level must be non-negative")
    if levels > 1:
        raise UnsupportedLevelError(f"only one interpolation level is supported, got {levels}")
    if levels == 0:
        return cfg
    if cfg.family not in (Family.AN, Family.ANR) or cfg.positive_only:
        raise InvalidInputError(f"interpolation needs An or Anr, got {cfg.family.value}")
    if cfg.interpolation_level:
        raise InvalidStateError("configuration is already interpolated")
    if cfg.dense is not None or cfg.support.shape[0] != cfg.rank * (cfg.rank + 1):
        raise InvalidInputError("interpolation needs the full root set")
    _require_unprojected(cfg)
    return cfg._replace(pairs=None, interpolation_level=1, n_roots=len(cfg))


def capacity(n: int, interpolation_levels: int = 0) -> int:
    """How many classes a rank-n A_n configuration can host."""
    if interpolation_levels == 0:
        return n * (n + 1)
    if interpolation_levels == 1:
        return n * n * (n + 1)
    raise UnsupportedLevelError(f"only one interpolation level is supported, got {interpolation_levels}")


def min_n_dim(n_classes: int, interpolation_levels: int = 0) -> int:
    """Smallest rank whose capacity reaches ``n_classes``."""
    if n_classes < 1:
        raise InvalidInputError("n_classes must be positive")
    capacity(1, interpolation_levels)
    # start just below the real root of the capacity polynomial
    root = n_classes ** (1 / 3) if interpolation_levels else math.sqrt(n_classes)
    n = max(1, int(root) - 2)
    while n > 1 and capacity(n - 1, interpolation_levels) >= n_classes:
        n -= 1
    while capacity(n, interpolation_levels) < n_classes:
        n += 1
    return n


class CenterMatrix:
    """The n_classes x n_dim target centers; row i is the center of class i.

    A matrix chosen from a configuration stays lazy: ``rows`` materializes
    only the requested classes, so nothing of size n_classes is built during
    training.  ``centers`` materializes (and caches) everything.
    """

    DUPLICATE_COS = 1.0 - 1e-9
    PAIRWISE_CHECK_LIMIT = 4096

    def __init__(
        self,
        centers: np.ndarray | None = None,
        *,
        config: CenterConfiguration | None = None,
        n_classes: int | None = None,
        radii=None,
        source: str | None = None,
        validate: bool = True,
    ):
        if centers is None and config is None:
            raise InvalidInputError("CenterMatrix needs centers or a configuration")
        self.config = config
        if centers is not None:
            centers = np.array(centers, dtype=np.float64)
            if centers.ndim != 2 or centers.shape[0] < 1 or centers.shape[1] < 1:
                raise InvalidInputError("centers must be a non-empty 2-D array")
            if n_classes is not None and n_classes != centers.shape[0]:
                raise InvalidInputError("n_classes does not match the number of rows")
            centers.setflags(write=False)
            self._dense = centers
            self.n_classes, self.n_dim = centers.shape
        else:
            if n_classes is None:
                n_classes = len(config)
            if not 1 <= n_classes <= len(config):
                raise CapacityError(n_classes, len(config))
            self._dense = None
            self.n_classes = int(n_classes)
            self.n_dim = config.ambient_dim
        if source is None:
            source = config.family.value if config is not None else Family.CUSTOM.value
        self.source = source
        if radii is not None:
            radii = np.array(radii, dtype=np.float64).reshape(-1)
            if radii.shape != (self.n_classes,):
                raise InvalidInputError("radii must have one entry per class")
            if np.any(~(radii > 0)):
                raise InvalidInputError("radii must be strictly positive")
            radii.setflags(write=False)
        self.radii = radii
        if validate and self._dense is not None:
            self._check_rows(self._dense)

    @classmethod
    def _check_rows(cls, c: np.ndarray) -> None:
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("centers must be finite")
        norms = np.linalg.norm(c, axis=1)
        if np.any(norms == 0):
            raise InvalidInputError(f"center {int(np.argmin(norms))} is the zero vector")
        unit = c / norms[:, None]
        m = len(c)
        if m <= cls.PAIRWISE_CHECK_LIMIT:
            g = unit @ unit.T
            np.fill_diagonal(g, -np.inf)
            i, j = np.unravel_index(np.argmax(g), g.shape)
            if m > 1 and g[i, j] >= cls.DUPLICATE_COS:
                raise InvalidInputError(f"centers {min(i, j)} and {max(i, j)} are duplicates")
        else:
            # too many rows for an all-pairs scan; catch exact duplicates only
            if len(np.unique(np.round(unit, 12), axis=0)) != m:
                raise InvalidInputError("centers contain duplicate rows")

    def __repr__(self) -> str:
        return f"CenterMatrix(n_classes={self.n_classes}, n_dim={self.n_dim}, source={self.source})"

    @property
    def is_lazy(self) -> bool:
        return self._dense is None

    def rows(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        if self._dense is not None:
            return self._dense[idx]
        return self.config.rows(idx)

    @cached_property
    def centers(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        c = self.config.rows(np.arange(self.n_classes))
        c.setflags(write=False)
        return c

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.centers, axis=1)

    def radius(self, labels) -> np.ndarray:
        if self.radii is None:
            return np.ones(len(np.asarray(labels).reshape(-1)))
        return self.radii[np.asarray(labels, dtype=np.int64)]

    def with_radii(self, radii) -> "CenterMatrix":
        if self._dense is not None:
            return CenterMatrix(self._dense, radii=radii, source=self.source, config=self.config, validate=False)
        return CenterMatrix(config=self.config, n_classes=self.n_classes, radii=radii, source=self.source)

    def starts_with(self, other: "CenterMatrix") -> bool:
        """True when the first ``other.n_classes`` rows equal ``other`` bitwise."""
        if other.n_classes > self.n_classes or other.n_dim != self.n_dim:
            return False
        mine = self.rows(np.arange(other.n_classes))
        if not np.array_equal(mine, other.centers):
            return False
        if other.radii is not None or self.radii is not None:
            return np.array_equal(self.radius(np.arange(other.n_classes)), other.radius(np.arange(other.n_classes)))
        return True


def choose_centers(cfg: CenterConfiguration, n_classes: int) -> CenterMatrix:
    """The first ``n_classes`` vectors of ``cfg`` as class centers."""
    if n_classes < 1:
        raise InvalidInputError("n_classes must be positive")
    if n_classes > len(cfg):
        raise CapacityError(n_classes, len(cfg))
    if cfg.dense is not None:
        return CenterMatrix(cfg.dense[:n_classes], config=cfg, source=cfg.family.value)
    return CenterMatrix(config=cfg, n_classes=n_classes)


def gen_rotation_2d(
    n_classes: int, circle_radius: float = 5.0, base_cluster_radius: float = 1.0
) -> CenterMatrix:
    """Planar centers grown by repeated half-spacing rotation.

    Generation 0 is four vectors at 90 degrees; every later generation
    rotates all existing vectors by half the current spacing, doubling the
    count and halving the cluster radius.
    """
    if n_classes < 1:
        raise InvalidInputError("n_classes must be positive")
    if not (circle_radius > 0 and base_cluster_radius > 0):
        raise InvalidInputError("radii must be positive")
    angles = [0.0, 90.0, 180.0, 270.0]
    gens = [0, 0, 0, 0]
    g = 0
    while len(angles) < n_classes:
        g += 1
        step = 90.0 / 2**g
        angles = angles + [a + step for a in angles]
        gens = gens + [g] * len(gens)
    ang = np.deg2rad(np.array(angles[:n_classes]))
    vecs = circle_radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    radii = base_cluster_radius / 2.0 ** np.array(gens[:n_classes], dtype=np.float64)
    cfg = CenterConfiguration(Family.ROTATION_2D, dense=vecs)
    return CenterMatrix(vecs, config=cfg, radii=radii, source=Family.ROTATION_2D.value)


def build_configuration(
    family: str | Family,
    n: int,
    *,
    projection: str | Projection = Projection.NONE,
    seed: int | None = None,
    interpolation: int = 0,
    positive_only: bool = False,
) -> CenterConfiguration:
    """Run the generation pipeline: roots, subset/shuffle, interpolation, projection."""
    family = Family(family)
    if family not in ROOT_FAMILIES:
        raise InvalidInputError(f"{family.value} is not an A_n family")
    cfg = gen_an_roots(n)
    if family is Family.ANP or positive_only:
        cfg = positive_subset(cfg)
    if family is Family.ANR:
        cfg = shuffle(cfg, 0 if seed is None else seed)
    cfg = interpolate(cfg, interpolation)
    projection = Projection(projection)
    if projection is Projection.DROP_LAST:
        cfg = project_drop(cfg)
    elif projection is Projection.ISOMETRIC:
        cfg = project_isometric(cfg)
    return cfg


def check_provenance(cfg: CenterConfiguration, C: CenterMatrix) -> None:
    """Raise unless C's rows are the leading vectors of cfg."""
    if C.n_dim != cfg.ambient_dim or C.n_classes > len(cfg):
        raise InconsistentProvenanceError(
            f"centers {C.n_classes}x{C.n_dim} cannot come from {cfg!r}"
        )
    if C.config is cfg:
        return
    expected = cfg.rows(np.arange(C.n_classes))
    if not np.allclose(C.centers, expected, rtol=0, atol=1e-6):
        raise InconsistentProvenanceError("center rows differ from the configuration vectors")
