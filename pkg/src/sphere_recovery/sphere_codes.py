"""Spherical point codes: construction, angular geometry, projection, text I/O.

A code is a finite list of distinct unit vectors in R^n.  The key scalar is
``alpha``, the maximum pairwise inner product, which controls how close the
code comes to losing linear independence on small subsets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import DiscreteMeasure, check_unit_vectors

__all__ = [
    "SphericalCode",
    "CodeSequence",
    "make_circle_code",
    "make_e8_code",
    "angular_distance",
    "theta_of",
    "nearest_code_projection",
    "save_code",
    "load_code",
]

# Inner products this close to 1 mean duplicated points.
_DUPLICATE_IP = 1.0 - 1e-12


@dataclass(frozen=True)
class SphericalCode:
    """Ordered list of N distinct unit vectors in R^n (N >= 2, n >= 2)."""

    points: np.ndarray
    label: str = "code"

    def __post_init__(self):
        pts = check_unit_vectors(self.points)
        if pts.shape[0] < 2:
            raise ValueError("a code needs at least 2 points")
        gram = pts @ pts.T
        off = gram[~np.eye(pts.shape[0], dtype=bool)]
        if off.max() >= _DUPLICATE_IP:
            raise ValueError("code contains duplicated (or nearly duplicated) points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_alpha", float(off.max()))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def alpha(self) -> float:
        """Maximum inner product between two distinct code points, in [-1, 1)."""
        return self._alpha

    def max_inner_product(self, subset: Sequence[int]) -> float:
        """alpha restricted to a subset of code indices (needs >= 2 indices)."""
        idx = np.asarray(list(subset), dtype=int)
        if idx.size < 2:
            raise ValueError("subset needs at least 2 indices")
        sub = self.points[idx]
        gram = sub @ sub.T
        return float(gram[~np.eye(idx.size, dtype=bool)].max())


def make_circle_code(N: int, offset: float = 0.0) -> SphericalCode:
    """N equally spaced points on the unit circle, rotated by ``offset`` radians.

    Point i sits at angle 2*pi*i/N + offset, so alpha = cos(2*pi/N) for any
    offset.  N >= 2.
    """
    if N < 2:
        raise ValueError("circle code needs N >= 2")
    ang = 2.0 * np.pi * np.arange(N) / N + offset
    pts = np.column_stack([np.cos(ang), np.sin(ang)])
    return SphericalCode(pts, label=f"circle-{N}")


def make_e8_code() -> SphericalCode:
    """The 240 unit vectors in the direction of the E8 root system.

    112 vectors (+-e_i +- e_j)/sqrt(2) for i < j, then 128 vectors
    (+-1, ..., +-1)/(2*sqrt(2)) with an even number of minus signs.  The
    construction order is deterministic: integer roots first, ordered by
    (i, j) and sign pattern (+,+), (+,-), (-,+), (-,-); then half-integer
    roots ordered by the 7-bit index whose bits give the signs of the first
    seven coordinates (bit set = minus), the last sign fixing even parity.
    """
    roots = np.zeros((240, 8))
    r = 0
    s2 = math.sqrt(2.0)
    for i, j in itertools.combinations(range(8), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            roots[r, i] = si / s2
            roots[r, j] = sj / s2
            r += 1
    scale = 1.0 / (2.0 * s2)
    for bits in range(128):
        signs = np.ones(8)
        minus = 0
        for b in range(7):
            if bits >> b & 1:
                signs[b] = -1.0
                minus += 1
        if minus % 2 == 1:
            signs[7] = -1.0
        roots[r] = signs * scale
        r += 1
    assert r == 240
    return SphericalCode(roots, label="e8")


def angular_distance(x, y) -> float:
    """Geodesic (great-circle) distance arccos(<x, y>) in [0, pi]."""
    xv = check_unit_vectors(x)[0]
    yv = check_unit_vectors(y)[0]
    if xv.shape != yv.shape:
        raise ValueError("points live in different dimensions")
    ip = float(np.clip(xv @ yv, -1.0, 1.0))
    return float(np.arccos(ip))


def _pairwise_angles(points: np.ndarray, code: SphericalCode) -> np.ndarray:
    """(k, N) matrix of angular distances from each point to each code point."""
    if points.shape[1] != code.dimension:
        raise ValueError("points and code live in different dimensions")
    ip = np.clip(points @ code.points.T, -1.0, 1.0)
    return np.arccos(ip)


def theta_of(code: SphericalCode, support) -> float:
    """Largest distance from a support point to the code.

    theta = max over support points of the angular distance to the nearest
    code point; 0 when every support point lies on the code.
    """
    pts = check_unit_vectors(support)
    if pts.shape[0] == 0:
        raise ValueError("support is empty")
    ang = _pairwise_angles(pts, code)
    return float(ang.min(axis=1).max())


def nearest_code_projection(code: SphericalCode, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Push every atom of mu to its nearest code point, summing weights.

    Exact ties between equidistant code points go to the lowest code index.
    Atoms whose weights cancel exactly are dropped from the result.  Total
    mass is preserved.
    """
    if mu.size == 0:
        raise ValueError("cannot project an empty measure")
    ip = mu.points @ code.points.T
    # argmax returns the first (lowest) index among exact ties, which is the
    # documented tie-break; larger inner product = smaller angle.
    nearest = np.argmax(ip, axis=1)
    w = np.zeros(code.size)
    np.add.at(w, nearest, mu.weights)
    keep = np.flatnonzero(w != 0.0)
    return DiscreteMeasure(code.points[keep], w[keep], signed=mu.signed)


@dataclass(frozen=True)
class CodeSequence:
    """Nested refinement: each code's point set contains the previous one's."""

    codes: tuple

    def __post_init__(self):
        codes = tuple(self.codes)
        if len(codes) == 0:
            raise ValueError("empty code sequence")
        n = codes[0].dimension
        for j, code in enumerate(codes):
            if code.dimension != n:
                raise ValueError("all codes must share the ambient dimension")
            if j == 0:
                continue
            prev = codes[j - 1]
            if code.size < prev.size:
                raise ValueError("code sizes must be nondecreasing")
            ip = prev.points @ code.points.T
            if np.max(ip, axis=1).min() < _DUPLICATE_IP:
                raise ValueError(f"code {j} does not contain code {j - 1}")
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return len(self.codes)

    def __getitem__(self, j: int) -> SphericalCode:
        return self.codes[j]


def save_code(path, code: SphericalCode) -> None:
    """Write 'n N' then one line of n coordinates (17 significant digits) per point."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{code.dimension} {code.size}\n")
        for p in code.points:
            fh.write(" ".join(format(x, ".17g") for x in p) + "\n")


def load_code(path, label: str | None = None) -> SphericalCode:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("expected header line 'n N'")
        n, N = int(header[0]), int(header[1])
        pts = np.loadtxt(fh, ndmin=2)
    if pts.shape != (N, n):
        raise ValueError(f"expected {N} points of dimension {n}, got shape {pts.shape}")
    return SphericalCode(pts, label=label or f"file-{N}x{n}")
