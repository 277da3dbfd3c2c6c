"""Discrete measures on the unit sphere: atoms, weights, JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "check_unit_vectors",
    "load_measure",
    "save_measure",
]

# Unit-norm tolerance shared by every type that carries sphere points.
UNIT_NORM_TOL = 1e-12

# Two atoms closer than this (Euclidean) are considered the same point.
DISTINCT_TOL = 1e-12


def check_unit_vectors(points, *, min_dim: int = 2) -> np.ndarray:
    """Validate a (k, n) array of unit vectors and return it as float64.

    Accepts a single vector as well, returning shape (1, n).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise ValueError("points must be a (k, n) array")
    if pts.shape[1] < min_dim:
        raise ValueError(f"ambient dimension must be >= {min_dim}, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    norms = np.linalg.norm(pts, axis=1)
    off = np.abs(norms - 1.0)
    if pts.shape[0] and off.max() > UNIT_NORM_TOL:
        i = int(np.argmax(off))
        raise ValueError(
            f"point {i} has norm {norms[i]!r}, off the unit sphere by more than {UNIT_NORM_TOL}"
        )
    return pts


def _check_distinct(pts: np.ndarray, what: str) -> None:
    k = pts.shape[0]
    if k < 2:
        return
    # Desk-scale k, so the quadratic check is fine.
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    dist[np.diag_indices(k)] = np.inf
    if dist.min() <= DISTINCT_TOL:
        i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
        raise ValueError(f"{what} {i} and {j} coincide")


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finite atomic measure sum_i weights[i] * delta_{points[i]} on S^{n-1}.

    ``signed=False`` (the default) enforces nonnegative weights.  An empty
    measure (zero atoms) is allowed; construct it with a (0, n) point array.
    """

    points: np.ndarray
    weights: np.ndarray
    signed: bool = False

    def __post_init__(self):
        pts = check_unit_vectors(self.points)
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != pts.shape[0]:
            raise ValueError("weights must be a vector with one entry per atom")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if not self.signed and w.size and w.min() < 0.0:
            raise ValueError("unsigned measure with negative weight; pass signed=True")
        _check_distinct(pts, "atoms")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def is_probability(self, tol: float = 1e-9) -> bool:
        if self.size == 0:
            return False
        return bool(self.weights.min() >= 0.0 and abs(self.total_mass - 1.0) <= tol)

    def drop_zero_atoms(self) -> "DiscreteMeasure":
        keep = self.weights != 0.0
        if keep.all():
            return self
        return DiscreteMeasure(self.points[keep], self.weights[keep], self.signed)

    def to_dict(self) -> dict:
        return {
            "atoms": [
                {"point": [float(x) for x in p], "weight": float(w)}
                for p, w in zip(self.points, self.weights)
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict, *, signed: bool = False) -> "DiscreteMeasure":
        atoms = doc["atoms"]
        if len(atoms) == 0:
            raise ValueError("measure document has no atoms; dimension is undecidable")
        pts = np.array([a["point"] for a in atoms], dtype=float)
        w = np.array([a["weight"] for a in atoms], dtype=float)
        if not signed and w.size and w.min() < 0.0:
            signed = True
        return cls(pts, w, signed)


def save_measure(path, mu: DiscreteMeasure) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(mu.to_dict(), fh, indent=1)
        fh.write("\n")


def load_measure(path) -> DiscreteMeasure:
    with open(path, "r", encoding="ascii") as fh:
        return DiscreteMeasure.from_dict(json.load(fh))
