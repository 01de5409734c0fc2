"""Computational domains: membership tests, uniform interior sampling, analytic
volumes, and polynomial boundary factors with exact first/second derivatives.

The boundary factor B of each domain is a fixed polynomial that is positive in
the interior, vanishes (linearly) on the boundary, and carries closed-form
gradient and Hessian:

* ball of radius R:            B = R^2 - |x|^2
* rectangle [a_i, b_i]:        B = prod_i 4 (x_i - a_i)(b_i - x_i) / (b_i - a_i)^2
* annulus r0 < |x| < r1:       B = (|x|^2 - r0^2)(r1^2 - |x|^2)
* triangle:                    B = l1 l2 l3, the product of barycentric coordinates
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from .jets import Jet2
from .seeding import TAG_BOUNDARY, TAG_INTERIOR, make_rng

# rejection sampling gives up once this many proposals were drawn with an
# acceptance rate still below ACCEPT_FLOOR
ACCEPT_FLOOR = 1e-3
PROPOSAL_CAP = 400_000


class DegenerateDomainError(RuntimeError):
    """Rejection sampling failed: the domain fills too little of its bounding box."""


@dataclass(frozen=True, eq=False)
class PointBatch:
    """Immutable batch of interior points plus the seed that generated them."""

    points: np.ndarray  # shape (n, d)
    seed: int

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


class Domain:
    """Base class; subclasses fix dim, bounding_box and the boundary polynomial."""

    dim: int
    bounding_box: np.ndarray  # shape (d, 2)

    def volume(self) -> float:
        raise NotImplementedError

    def _contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _boundary_jets(self, pts: np.ndarray):
        raise NotImplementedError

    def sample_boundary(self, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> bool | np.ndarray:
        """True iff x is strictly interior; accepts a point (d,) or a batch (n, d)."""
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {np.shape(x)}")
        inside = self._contains(pts)
        return bool(inside[0]) if single else inside

    def boundary_jets(self, pts: np.ndarray):
        """Batched boundary factor: arrays (B, grad B, hess B) of shapes (n,), (n,d), (n,d,d)."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"expected batch of shape (n, {self.dim}), got {pts.shape}")
        return self._boundary_jets(pts)

    def boundary_factor(self, x) -> Jet2:
        """Boundary factor jet at one point: B > 0 inside, B = 0 on the boundary."""
        pts = np.asarray(x, dtype=float)
        if pts.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {pts.shape}")
        b, g, h = self._boundary_jets(pts[None, :])
        return Jet2(float(b[0]), g[0].copy(), h[0].copy())

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    """d-dimensional open ball of radius R centered at the origin."""

    dim: int = 2
    radius: float = 1.0
    bounding_box: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("ball dimension must be >= 1")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        box = np.array([[-self.radius, self.radius]] * self.dim, dtype=float)
        box.setflags(write=False)
        object.__setattr__(self, "bounding_box", box)

    def volume(self) -> float:
        d = self.dim
        return pi ** (d / 2.0) / gamma(d / 2.0 + 1.0) * self.radius**d

    def _contains(self, pts):
        return (pts**2).sum(axis=1) < self.radius**2

    def _boundary_jets(self, pts):
        n, d = pts.shape
        b = self.radius**2 - (pts**2).sum(axis=1)
        g = -2.0 * pts
        h = np.broadcast_to(-2.0 * np.eye(d), (n, d, d)).copy()
        return b, g, h

    def sample_boundary(self, n, seed):
        rng = make_rng(seed, TAG_BOUNDARY)
        v = rng.standard_normal((n, self.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.radius * v

    def describe(self):
        return {"kind": "ball", "dim": self.dim, "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Rectangle(Domain):
    """Axis-aligned box given by per-axis intervals [a_i, b_i]."""

    intervals: tuple  # ((a1, b1), ..., (ad, bd))
    dim: int = field(init=False)
    bounding_box: np.ndarray = field(init=False)

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float)
        if iv.ndim != 2 or iv.shape[1] != 2 or iv.shape[0] < 1:
            raise ValueError("intervals must be a nonempty list of (lo, hi) pairs")
        if not (iv[:, 1] > iv[:, 0]).all():
            raise ValueError("every rectangle interval needs hi > lo")
        object.__setattr__(self, "intervals", tuple(map(tuple, iv.tolist())))
        object.__setattr__(self, "dim", iv.shape[0])
        box = iv.copy()
        box.setflags(write=False)
        object.__setattr__(self, "bounding_box", box)

    @staticmethod
    def unit_square():
        return Rectangle(((0.0, 1.0), (0.0, 1.0)))

    def volume(self) -> float:
        iv = np.asarray(self.intervals)
        return float(np.prod(iv[:, 1] - iv[:, 0]))

    def _contains(self, pts):
        iv = np.asarray(self.intervals)
        return ((pts > iv[:, 0]) & (pts < iv[:, 1])).all(axis=1)

    def _boundary_jets(self, pts):
        # B = prod_i f_i,  f_i = c_i (x_i - a_i)(b_i - x_i) with max f_i = 1
        iv = np.asarray(self.intervals)
        a, b = iv[:, 0], iv[:, 1]
        c = 4.0 / (b - a) ** 2
        f = c * (pts - a) * (b - pts)          # (n, d)
        f1 = c * (a + b - 2.0 * pts)           # f_i'
        f2 = -2.0 * c                          # f_i'' (constant per axis)
        n, d = pts.shape
        B = f.prod(axis=1)
        g = np.empty((n, d))
        h = np.empty((n, d, d))
        for i in range(d):
            rest_i = _prod_excluding(f, i)
            g[:, i] = f1[:, i] * rest_i
            h[:, i, i] = f2[i] * rest_i
            for j in range(i + 1, d):
                rest_ij = _prod_excluding(f, i, j)
                hij = f1[:, i] * f1[:, j] * rest_ij
                h[:, i, j] = hij
                h[:, j, i] = hij
        return B, g, h

    def sample_boundary(self, n, seed):
        rng = make_rng(seed, TAG_BOUNDARY)
        iv = np.asarray(self.intervals)
        pts = iv[:, 0] + rng.uniform(0.0, 1.0, (n, self.dim)) * (iv[:, 1] - iv[:, 0])
        axes = rng.integers(0, self.dim, n)
        sides = rng.integers(0, 2, n)
        pts[np.arange(n), axes] = iv[axes, sides]
        return pts

    def describe(self):
        return {"kind": "rectangle", "intervals": [list(p) for p in self.intervals]}


@dataclass(frozen=True, eq=False)
class Annulus(Domain):
    """Planar annulus r0 < |x| < r1."""

    r0: float
    r1: float
    dim: int = field(init=False, default=2)
    bounding_box: np.ndarray = field(init=False)

    def __post_init__(self):
        if not (self.r1 > self.r0 > 0):
            raise ValueError("annulus needs r1 > r0 > 0")
        box = np.array([[-self.r1, self.r1]] * 2, dtype=float)
        box.setflags(write=False)
        object.__setattr__(self, "bounding_box", box)

    def volume(self) -> float:
        return pi * (self.r1**2 - self.r0**2)

    def _contains(self, pts):
        s = (pts**2).sum(axis=1)
        return (s > self.r0**2) & (s < self.r1**2)

    def _boundary_jets(self, pts):
        # B(s) = (s - r0^2)(r1^2 - s), s = |x|^2
        n = pts.shape[0]
        s = (pts**2).sum(axis=1)
        B = (s - self.r0**2) * (self.r1**2 - s)
        dB = (self.r0**2 + self.r1**2) - 2.0 * s   # dB/ds; d2B/ds2 = -2
        g = dB[:, None] * (2.0 * pts)
        h = -2.0 * (4.0 * pts[:, :, None] * pts[:, None, :])
        h += (2.0 * dB)[:, None, None] * np.eye(2)
        return B, g, h

    def sample_boundary(self, n, seed):
        rng = make_rng(seed, TAG_BOUNDARY)
        theta = rng.uniform(0.0, 2.0 * pi, n)
        # pick circle proportional to its length so the density is uniform
        r = np.where(rng.uniform(0.0, self.r0 + self.r1, n) < self.r0, self.r0, self.r1)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    def describe(self):
        return {"kind": "annulus", "r0": self.r0, "r1": self.r1}


@dataclass(frozen=True, eq=False)
class Triangle(Domain):
    """Planar triangle with non-collinear vertices."""

    vertices: tuple  # ((x1,y1), (x2,y2), (x3,y3))
    dim: int = field(init=False, default=2)
    bounding_box: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 2):
            raise ValueError("triangle needs exactly three 2D vertices")
        area2 = _cross2(v[1] - v[0], v[2] - v[0])
        scale = max(1.0, float(np.abs(v).max()) ** 2)
        if abs(area2) <= 1e-12 * scale:
            raise ValueError("triangle vertices are collinear")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))
        box = np.column_stack([v.min(axis=0), v.max(axis=0)]).astype(float)
        box.setflags(write=False)
        object.__setattr__(self, "bounding_box", box)
        # barycentric coordinates l_k(x) are affine: l_k = g_k . x + c_k
        grads = np.empty((3, 2))
        offs = np.empty(3)
        for k in range(3):
            p, q = v[(k + 1) % 3], v[(k + 2) % 3]
            e = q - p
            denom = _cross2(e, v[k] - p)
            grads[k] = np.array([-e[1], e[0]]) / denom
            offs[k] = -_cross2(e, p) / denom
        grads.setflags(write=False)
        offs.setflags(write=False)
        object.__setattr__(self, "_bary_grads", grads)
        object.__setattr__(self, "_bary_offs", offs)

    def volume(self) -> float:
        v = np.asarray(self.vertices)
        return abs(_cross2(v[1] - v[0], v[2] - v[0])) / 2.0

    def _bary(self, pts):
        return pts @ np.asarray(self._bary_grads).T + np.asarray(self._bary_offs)

    def _contains(self, pts):
        return (self._bary(pts) > 0.0).all(axis=1)

    def _boundary_jets(self, pts):
        # B = l1 l2 l3 with affine l_k, so hess B = sum_{i<j} l_k (g_i g_j^T + g_j g_i^T)
        lam = self._bary(pts)                       # (n, 3)
        G = np.asarray(self._bary_grads)            # (3, 2)
        n = pts.shape[0]
        B = lam.prod(axis=1)
        g = np.zeros((n, 2))
        for i in range(3):
            g += _prod_excluding(lam, i)[:, None] * G[i]
        h = np.zeros((n, 2, 2))
        for i in range(3):
            for j in range(i + 1, 3):
                k = 3 - i - j
                outer = G[i][:, None] * G[j][None, :]
                h += lam[:, k, None, None] * (outer + outer.T)
        return B, g, h

    def sample_boundary(self, n, seed):
        rng = make_rng(seed, TAG_BOUNDARY)
        v = np.asarray(self.vertices)
        edges = [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
        lengths = np.array([np.linalg.norm(b - a) for a, b in edges])
        which = rng.choice(3, n, p=lengths / lengths.sum())
        t = rng.uniform(0.0, 1.0, n)
        starts = np.stack([edges[k][0] for k in which])
        ends = np.stack([edges[k][1] for k in which])
        return starts + t[:, None] * (ends - starts)

    def describe(self):
        return {"kind": "triangle", "vertices": [list(p) for p in self.vertices]}


def _prod_excluding(f: np.ndarray, *skip: int) -> np.ndarray:
    """Row-wise product of the columns of f excluding the given ones."""
    keep = [j for j in range(f.shape[1]) if j not in skip]
    if not keep:
        return np.ones(f.shape[0])
    return f[:, keep].prod(axis=1)


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def sample_interior(domain: Domain, n: int, seed: int) -> PointBatch:
    """n i.i.d. uniform interior points by rejection from the bounding box.

    Deterministic in (domain, n, seed). Raises DegenerateDomainError when the
    acceptance rate stays below ACCEPT_FLOOR after PROPOSAL_CAP proposals.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = make_rng(seed, TAG_INTERIOR)
    box = domain.bounding_box
    lo, span = box[:, 0], box[:, 1] - box[:, 0]
    chunk = max(1024, 2 * n)
    kept: list[np.ndarray] = []
    total_kept = 0
    proposals = 0
    while total_kept < n:
        cand = lo + rng.uniform(0.0, 1.0, (chunk, domain.dim)) * span
        inside = domain._contains(cand)
        acc = cand[inside]
        kept.append(acc)
        total_kept += acc.shape[0]
        proposals += chunk
        if proposals >= PROPOSAL_CAP and total_kept < max(1, ACCEPT_FLOOR * proposals):
            raise DegenerateDomainError(
                f"acceptance rate {total_kept / proposals:.2e} after {proposals} proposals"
            )
    pts = np.concatenate(kept, axis=0)[:n]
    return PointBatch(points=pts, seed=seed)


def acceptance_rate(domain: Domain, n_proposals: int, seed: int) -> float:
    """Fraction of bounding-box proposals that land inside; used by tests."""
    rng = make_rng(seed, TAG_INTERIOR)
    box = domain.bounding_box
    lo, span = box[:, 0], box[:, 1] - box[:, 0]
    cand = lo + rng.uniform(0.0, 1.0, (n_proposals, domain.dim)) * span
    return float(domain._contains(cand).mean())


def domain_from_dict(spec: dict) -> Domain:
    """Build a Domain from its describe() dictionary."""
    kind = spec.get("kind")
    if kind == "ball":
        return Ball(dim=int(spec.get("dim", 2)), radius=float(spec.get("radius", 1.0)))
    if kind == "rectangle":
        return Rectangle(tuple(tuple(float(x) for x in p) for p in spec["intervals"]))
    if kind == "annulus":
        return Annulus(r0=float(spec["r0"]), r1=float(spec["r1"]))
    if kind == "triangle":
        return Triangle(tuple(tuple(float(x) for x in p) for p in spec["vertices"]))
    raise ValueError(f"unknown domain kind: {kind!r}")
