"""Convex domains and their geometric oracles.

Every body answers three questions: is a point inside, how far can a ray travel
before leaving, and how far is a point from the boundary.  Oracles are
vectorized over rows so that quadrature and sampling code can batch them.

Points live in the ambient real space.  For complex bodies the real coordinates
are interleaved pairs (x_1, y_1, x_2, y_2, ...), so a body in C^d has real
dimension 2d.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

from .errors import InputError, PreconditionError

TOL_RAY = 1e-10
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ScalarField(enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


def apply_j(x: np.ndarray) -> np.ndarray:
    # (x_i, y_i) -> (-y_i, x_i) on interleaved pairs
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0::2] = -x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


@lru_cache(maxsize=64)
def _sphere_points_cached(m: int, count: int) -> np.ndarray:
    if m == 1:
        pts = np.array([[1.0], [-1.0]])
    elif m == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        pts = np.column_stack([np.cos(th), np.sin(th)])
    elif m == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        rho = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + math.sqrt(5.0)) * i
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    else:
        u = stats.qmc.Halton(d=m, scramble=False).random(count + 1)[1:]
        g = stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    pts.setflags(write=False)
    return pts


def sphere_points(m: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy points on the unit sphere of R^m."""
    return _sphere_points_cached(int(m), int(count))


def covering_angle(m: int, count: int) -> float:
    # rough covering radius (radians) of sphere_points(m, count)
    if m <= 1:
        return 0.0
    if m == 2:
        return math.pi / count
    area = 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)
    return min(math.pi / 2, 2.0 * (area / count) ** (1.0 / (m - 1)))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float)
        u = np.asarray(self.direction, dtype=float)
        if o.shape != u.shape:
            raise InputError("ray origin and direction have different shapes")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise InputError("ray direction must be a unit vector")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", u)


class ConvexBody:
    """Base class; subclasses implement inside, hits, bdist, normals and support."""

    kind = "abstract"
    bounded = True
    exact_hits = True
    exact_bdist = True

    def __init__(self, ambient_dim: int, field: ScalarField, base_point):
        if field is ScalarField.COMPLEX and ambient_dim % 2:
            raise InputError("complex bodies need an even real dimension")
        self.ambient_dim = int(ambient_dim)
        self.field = field
        bp = np.array(base_point, dtype=float)
        if bp.shape != (self.ambient_dim,):
            raise InputError(f"base_point must have {self.ambient_dim} coordinates")
        bp.setflags(write=False)
        self.base_point = bp

    def _check_base_point(self):
        if not self.inside(self.base_point[None])[0]:
            raise InputError("base_point is not interior")
        if not self.bdist(self.base_point[None])[0] > 0:
            raise InputError("base_point has no interior margin")

    @property
    def dim(self) -> int:
        return self.ambient_dim // 2 if self.field is ScalarField.COMPLEX else self.ambient_dim

    @property
    def is_complex(self) -> bool:
        return self.field is ScalarField.COMPLEX

    # --- oracles (vectorized over rows) ---
    def inside(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hits(self, P: np.ndarray, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bdist(self, P: np.ndarray) -> np.ndarray:
        return _sampled_bdist(self, P)[0]

    def bdist_bracket(self, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.exact_bdist:
            d = self.bdist(P)
            return d, d
        return _sampled_bdist(self, P)[1:]

    def normals(self, z: np.ndarray) -> list[np.ndarray]:
        """Outward unit normals of supporting hyperplanes at the boundary point z."""
        raise NotImplementedError

    def support(self, n: np.ndarray) -> float:
        """sup over the body of <n, y>."""
        raise NotImplementedError

    @cached_property
    def radius(self) -> float:
        # an upper bound on the distance from base_point to any point of the body
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @cached_property
    def base_depth(self) -> float:
        """Boundary distance of the base point."""
        return float(self.bdist(self.base_point[None])[0])

    def scaled(self, c: float, about) -> ConvexBody:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"type": self.kind, "field": self.field.value, "dim": self.dim,
                "base_point": self.base_point.tolist()}

    def _bisect_hits(self, P: np.ndarray, U: np.ndarray) -> np.ndarray:
        P = np.atleast_2d(P)
        U = np.atleast_2d(U)
        m = max(len(P), len(U))
        P = np.broadcast_to(P, (m, self.ambient_dim))
        U = np.broadcast_to(U, (m, self.ambient_dim))
        lo = np.zeros(m)
        hi = np.full(m, 2.0 * self.radius * (1.0 + 1e-9) + 2.0 * np.linalg.norm(P - self.base_point, axis=1))
        # halve the outside parameter until it lands inside: gives a factor-2 bracket
        shrinking = np.ones(m, dtype=bool)
        for _ in range(1100):
            idx = np.nonzero(shrinking)[0]
            if len(idx) == 0:
                break
            mid = 0.5 * hi[idx]
            ok = self.inside(P[idx] + mid[:, None] * U[idx])
            hi[idx[~ok]] = mid[~ok]
            lo[idx[ok]] = mid[ok]
            shrinking[idx[ok]] = False
        for _ in range(200):
            active = (hi - lo) > TOL_RAY * lo
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            mid = 0.5 * (lo[idx] + hi[idx])
            ok = self.inside(P[idx] + mid[:, None] * U[idx])
            lo[idx] = np.where(ok, mid, lo[idx])
            hi[idx] = np.where(ok, hi[idx], mid)
        return 0.5 * (lo + hi)


def _as_rows(x, n: int) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None]
    if a.shape[-1] != n:
        raise InputError(f"expected points with {n} real coordinates, got {a.shape[-1]}")
    return a


def _sampled_bdist(body: ConvexBody, P: np.ndarray, count: int | None = None):
    """Minimize the ray hit over all unit directions; returns (value, lower, upper)."""
    P = _as_rows(P, body.ambient_dim)
    n = body.ambient_dim
    count = count or 256 * n
    eye = np.eye(n)
    vals = np.array([_min_hit_in_span(body, p, eye, count)[0] for p in P])
    lower = vals * math.cos(covering_angle(n, count)) if n > 1 else vals
    # local refinement usually lands on the true minimum; the lower end stays
    # the conservative supporting-hyperplane estimate
    return vals, np.minimum(lower, vals), vals


def _min_hit_in_span(body: ConvexBody, p: np.ndarray, F: np.ndarray, count: int):
    """min over unit w in span(F) of the ray hit from p; returns (value, direction)."""
    vals, dirs = min_hit_batch(body, p, np.asarray(F, dtype=float)[None], count)
    return float(vals[0]), dirs[0]


def min_hit_batch(body: ConvexBody, p: np.ndarray, Fs: np.ndarray, count: int,
                  step_tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Slice distances for a stack of frames Fs (B, n, m) sharing the origin p.

    Each frame is scored by sampling its unit sphere on a fixed lattice and
    polishing the best sample locally (golden section on circles, compass
    search on higher spheres).
    """
    Fs = np.asarray(Fs, dtype=float)
    nb, n, m = Fs.shape
    C = np.asarray(sphere_points(m, count))
    W = np.einsum("bnm,sm->bsn", Fs, C)
    h = body.hits(p[None], W.reshape(-1, n)).reshape(nb, len(C))
    idx = np.argmin(h, axis=1)
    best = h[np.arange(nb), idx]
    c = C[idx].copy()
    live = np.isfinite(best)
    if m == 1 or not np.any(live):
        return best, np.einsum("bnm,bm->bn", Fs, c)
    if m == 2:
        th = np.arctan2(c[:, 1], c[:, 0])
        a, b = th - 2 * np.pi / count, th + 2 * np.pi / count

        def f(t):
            w = np.cos(t)[:, None] * Fs[:, :, 0] + np.sin(t)[:, None] * Fs[:, :, 1]
            return body.hits(p[None], w)

        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1, f2 = f(x1), f(x2)
        for _ in range(int(math.log(4 * np.pi / count / 1e-12) / -math.log(GOLDEN)) + 1):
            left = f1 < f2
            a, b = np.where(left, a, x1), np.where(left, x2, b)
            n1 = np.where(left, b - GOLDEN * (b - a), x2)
            n2 = np.where(left, x1, a + GOLDEN * (b - a))
            fx = f(np.where(left, n1, n2))
            f1, f2 = np.where(left, fx, f2), np.where(left, f1, fx)
            x1, x2 = n1, n2
        tb = np.where(f1 < f2, x1, x2)
        fb = np.minimum(f1, f2)
        better = live & (fb < best)
        best = np.where(better, fb, best)
        th = np.where(better, tb, th)
        c = np.column_stack([np.cos(th), np.sin(th)])
        return best, np.einsum("bnm,bm->bn", Fs, c)
    step = np.where(live, covering_angle(m, count), 0.0)
    E = np.vstack([np.eye(m), -np.eye(m)])
    while True:
        act = np.nonzero(step > step_tol)[0]
        if len(act) == 0:
            break
        cand = c[act, None, :] + step[act, None, None] * E[None]
        cand /= np.linalg.norm(cand, axis=2, keepdims=True)
        Wc = np.einsum("bnm,bsm->bsn", Fs[act], cand)
        hc = body.hits(p[None], Wc.reshape(-1, n)).reshape(len(act), 2 * m)
        j = np.argmin(hc, axis=1)
        hj = hc[np.arange(len(act)), j]
        imp = hj < best[act]
        best[act[imp]] = hj[imp]
        c[act[imp]] = cand[np.arange(len(act)), j][imp]
        step[act[~imp]] *= 0.5
    return best, np.einsum("bnm,bm->bn", Fs, c)


# --------------------------------------------------------------------------
# Variants
# --------------------------------------------------------------------------


class Polytope(ConvexBody):
    """Intersection of open halfspaces a_i . x < b_i."""

    kind = "polytope"

    def __init__(self, A, b, base_point=None, field: ScalarField = ScalarField.REAL):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.shape[0]:
            raise InputError("polytope needs A of shape (m, n) and b of length m")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise InputError("polytope halfspace normals must be nonzero")
        self.A, self.b = A, b
        self._norms = norms
        for arr in (self.A, self.b):
            arr.setflags(write=False)
        if base_point is None:
            base_point = _chebyshev_center(A, b)
        super().__init__(A.shape[1], field, base_point)
        self._check_base_point()
        _ = self.vertices  # raises on unbounded input

    @cached_property
    def vertices(self) -> np.ndarray:
        n = self.ambient_dim
        for j in range(n):
            for s in (1.0, -1.0):
                c = np.zeros(n)
                c[j] = -s
                res = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n, method="highs")
                if res.status == 3:
                    raise InputError("polytope is unbounded")
        if n == 1:
            lo = max((self.b[i] / self.A[i, 0] for i in range(len(self.b)) if self.A[i, 0] < 0), default=-math.inf)
            hi = min((self.b[i] / self.A[i, 0] for i in range(len(self.b)) if self.A[i, 0] > 0), default=math.inf)
            return np.array([[lo], [hi]])
        hs = HalfspaceIntersection(np.column_stack([self.A, -self.b]), self.base_point)
        v = np.unique(np.round(hs.intersections, 12), axis=0)
        v.setflags(write=False)
        return v

    @cached_property
    def radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices - self.base_point, axis=1)))

    @cached_property
    def diameter(self) -> float:
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=-1)))

    def inside(self, X):
        X = _as_rows(X, self.ambient_dim)
        return np.all(X @ self.A.T < self.b, axis=1)

    def hits(self, P, U):
        P = _as_rows(P, self.ambient_dim)
        U = _as_rows(U, self.ambient_dim)
        num = self.b - P @ self.A.T
        den = U @ self.A.T
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
        return np.min(t, axis=1)

    def bdist(self, P):
        P = _as_rows(P, self.ambient_dim)
        return np.min((self.b - P @ self.A.T) / self._norms, axis=1)

    def normals(self, z):
        z = np.asarray(z, dtype=float)
        gap = (self.b - self.A @ z) / self._norms
        tol = 1e-8 * max(1.0, self.diameter)
        idx = np.nonzero(np.abs(gap) <= tol)[0]
        if len(idx) == 0:
            idx = [int(np.argmin(np.abs(gap)))]
        return [self.A[i] / self._norms[i] for i in idx]

    def support(self, n):
        return float(np.max(self.vertices @ np.asarray(n, dtype=float)))

    def scaled(self, c, about):
        a = np.asarray(about, dtype=float)
        Aa = self.A @ a
        return Polytope(self.A, c * (self.b - Aa) + Aa, a + c * (self.base_point - a), self.field)

    def transformed(self, M, t):
        M = np.asarray(M, dtype=float)
        t = np.asarray(t, dtype=float)
        Ainv = self.A @ np.linalg.inv(M)
        return Polytope(Ainv, self.b + Ainv @ t, M @ self.base_point + t, self.field)

    def describe(self):
        d = super().describe()
        d.update(A=self.A.tolist(), b=self.b.tolist())
        return d


def _chebyshev_center(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(A, axis=1)
    n = A.shape[1]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.column_stack([A, norms]), b_ub=b,
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        raise InputError("polytope is empty or unbounded")
    return res.x[:n]


class Ellipsoid(ConvexBody):
    """(x - c)^T Q (x - c) < 1 with Q symmetric positive definite."""

    kind = "ellipsoid"

    def __init__(self, center, shape, base_point=None, field: ScalarField = ScalarField.REAL):
        c = np.array(center, dtype=float)
        Q = np.array(shape, dtype=float)
        if Q.shape != (len(c), len(c)):
            raise InputError("ellipsoid shape must be a square matrix matching the center")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise InputError("ellipsoid shape matrix must be symmetric")
        w, R = np.linalg.eigh(Q)
        if np.any(w <= 0):
            raise InputError("ellipsoid shape matrix must be positive definite")
        self.center, self.Q = c, Q
        self._w, self._R = w, R
        self._axes = 1.0 / np.sqrt(w)
        self._Qinv = (R / w) @ R.T
        super().__init__(len(c), field, c if base_point is None else base_point)
        self._check_base_point()

    @cached_property
    def radius(self) -> float:
        return float(np.max(self._axes) + np.linalg.norm(self.base_point - self.center))

    @property
    def diameter(self) -> float:
        return float(2 * np.max(self._axes))

    def inside(self, X):
        Y = _as_rows(X, self.ambient_dim) - self.center
        return np.einsum("ij,jk,ik->i", Y, self.Q, Y) < 1.0

    def hits(self, P, U):
        Y = _as_rows(P, self.ambient_dim) - self.center
        U = _as_rows(U, self.ambient_dim)
        QU = U @ self.Q
        a = np.einsum("ij,ij->i", QU, U)
        b = np.einsum("ij,ij->i", QU, Y)
        c = np.einsum("ij,jk,ik->i", Y, self.Q, Y) - 1.0
        disc = np.maximum(b * b - a * c, 0.0)
        # stable root of a t^2 + 2 b t + c = 0 with c < 0
        return np.where(b > 0, -c / (b + np.sqrt(disc)), (np.sqrt(disc) - b) / a)

    def bdist(self, P):
        Z = (_as_rows(P, self.ambient_dim) - self.center) @ self._R
        a2 = self._axes ** 2
        amin2 = float(np.min(a2))
        grp = a2 <= amin2 * (1 + 1e-12)
        oth = ~grp
        zo, ao2 = Z[:, oth], a2[oth]
        rmin2 = np.sum(Z[:, grp] ** 2, axis=1)
        out = np.empty(len(Z))
        # degenerate branch: the nearest points form a sphere in the short-axis group
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xo = zo * ao2 / (ao2 - amin2)
        S = np.sum(xo ** 2 / ao2, axis=1) if np.any(oth) else np.zeros(len(Z))
        degenerate = (rmin2 <= (1e-14 * amin2)) & (S <= 1.0)
        if np.any(degenerate):
            d2 = np.sum((xo[degenerate] - zo[degenerate]) ** 2, axis=1) + amin2 * (1.0 - S[degenerate])
            out[degenerate] = np.sqrt(np.maximum(d2, 0.0))
        rest = ~degenerate
        if np.any(rest):
            Zr = Z[rest]
            lo = np.full(len(Zr), -amin2)
            hi = np.zeros(len(Zr))
            for _ in range(200):
                mu = 0.5 * (lo + hi)
                F = np.sum((Zr * np.sqrt(a2) / (a2 + mu[:, None])) ** 2, axis=1) - 1.0
                lo = np.where(F > 0, mu, lo)
                hi = np.where(F > 0, hi, mu)
                if np.all(hi - lo <= 1e-16 * amin2):
                    break
            mu = 0.5 * (lo + hi)
            X = Zr * a2 / (a2 + mu[:, None])
            out[rest] = np.linalg.norm(X - Zr, axis=1)
        return out

    def normals(self, z):
        g = self.Q @ (np.asarray(z, dtype=float) - self.center)
        return [g / np.linalg.norm(g)]

    def support(self, n):
        n = np.asarray(n, dtype=float)
        return float(n @ self.center + math.sqrt(n @ self._Qinv @ n))

    def scaled(self, c, about):
        a = np.asarray(about, dtype=float)
        return Ellipsoid(a + c * (self.center - a), self.Q / c ** 2, a + c * (self.base_point - a), self.field)

    def transformed(self, M, t):
        M = np.asarray(M, dtype=float)
        Mi = np.linalg.inv(M)
        return Ellipsoid(M @ self.center + t, Mi.T @ self.Q @ Mi, M @ self.base_point + t, self.field)

    def describe(self):
        d = super().describe()
        d.update(center=self.center.tolist(), shape=self.Q.tolist())
        return d


class PBall(ConvexBody):
    """||(x - c)/scale||_p < 1."""

    kind = "pball"

    def __init__(self, p: float, dim: int, scale: float = 1.0, center=None, base_point=None,
                 field: ScalarField = ScalarField.REAL):
        p = float(p)
        if not p >= 1:
            raise InputError("pball exponent must be >= 1")
        if not scale > 0:
            raise InputError("pball scale must be positive")
        self.p, self.scale = p, float(scale)
        c = np.zeros(dim) if center is None else np.array(center, dtype=float)
        if c.shape != (dim,):
            raise InputError(f"pball center must have {dim} coordinates")
        self.center = c
        self.exact_hits = p in (1.0, 2.0, math.inf)
        self.exact_bdist = self.exact_hits
        if p == 1.0:
            if dim > 12:
                raise InputError("pball with p = 1 is limited to 12 real dimensions")
            signs = np.array(np.meshgrid(*[[1.0, -1.0]] * dim, indexing="ij")).reshape(dim, -1).T
            self._signs = signs
        super().__init__(dim, field, c if base_point is None else base_point)
        self._check_base_point()

    @cached_property
    def radius(self) -> float:
        n = self.ambient_dim
        far = self.scale * n ** max(0.0, 0.5 - 1.0 / self.p)
        return float(far + np.linalg.norm(self.base_point - self.center))

    @property
    def diameter(self) -> float:
        n = self.ambient_dim
        return float(2 * self.scale * n ** max(0.0, 0.5 - 1.0 / self.p))

    def _norm(self, Y):
        return np.linalg.norm(Y, ord=self.p, axis=-1)

    def inside(self, X):
        Y = (_as_rows(X, self.ambient_dim) - self.center) / self.scale
        return self._norm(Y) < 1.0

    def hits(self, P, U):
        Y = (_as_rows(P, self.ambient_dim) - self.center) / self.scale
        U = _as_rows(U, self.ambient_dim)
        if self.p == 2.0:
            b = np.einsum("ij,ij->i", U, Y)
            c = np.einsum("ij,ij->i", Y, Y) - 1.0
            a = np.einsum("ij,ij->i", U, U)
            disc = np.maximum(b * b - a * c, 0.0)
            t = np.where(b > 0, -c / (b + np.sqrt(disc)), (np.sqrt(disc) - b) / a)
            return self.scale * t
        if self.p == math.inf:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                t = np.where(U != 0, (np.sign(U) - Y) / np.where(U != 0, U, 1.0), np.inf)
            return self.scale * np.min(t, axis=1)
        if self.p == 1.0:
            num = 1.0 - Y @ self._signs.T
            den = U @ self._signs.T
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                t = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
            return self.scale * np.min(t, axis=1)
        m = max(len(Y), len(U))
        return self._bisect_hits(np.broadcast_to(_as_rows(P, self.ambient_dim), (m, self.ambient_dim)),
                                 np.broadcast_to(U, (m, self.ambient_dim)))

    def bdist(self, P):
        Y = (_as_rows(P, self.ambient_dim) - self.center) / self.scale
        if self.p == 2.0:
            return self.scale * (1.0 - np.linalg.norm(Y, axis=1))
        if self.p == math.inf:
            return self.scale * np.min(1.0 - np.abs(Y), axis=1)
        if self.p == 1.0:
            return self.scale * (1.0 - np.sum(np.abs(Y), axis=1)) / math.sqrt(self.ambient_dim)
        return _sampled_bdist(self, P)[0]

    def normals(self, z):
        y = (np.asarray(z, dtype=float) - self.center) / self.scale
        if self.p == math.inf:
            m = np.max(np.abs(y))
            out = []
            for i in np.nonzero(np.abs(y) >= m - 1e-9)[0]:
                e = np.zeros_like(y)
                e[i] = np.sign(y[i])
                out.append(e)
            return out
        g = np.sign(y) * np.abs(y) ** (self.p - 1.0)
        return [g / np.linalg.norm(g)]

    def support(self, n):
        n = np.asarray(n, dtype=float)
        q = 1.0 if self.p == math.inf else (math.inf if self.p == 1.0 else self.p / (self.p - 1.0))
        return float(n @ self.center + self.scale * np.linalg.norm(n, ord=q))

    def scaled(self, c, about):
        a = np.asarray(about, dtype=float)
        return PBall(self.p, self.ambient_dim, self.scale * c, a + c * (self.center - a),
                     a + c * (self.base_point - a), self.field)

    def describe(self):
        d = super().describe()
        d.update(p=("inf" if self.p == math.inf else self.p), scale=self.scale, center=self.center.tolist())
        return d


class HalfSpace(ConvexBody):
    """x_1 > 0.  Unbounded; only closed-form operations accept it."""

    kind = "halfspace"
    bounded = False

    def __init__(self, dim: int, base_point=None, field: ScalarField = ScalarField.REAL):
        if base_point is None:
            base_point = np.eye(dim)[0]
        super().__init__(dim, field, base_point)
        self._check_base_point()

    @property
    def radius(self) -> float:
        return math.inf

    def inside(self, X):
        return _as_rows(X, self.ambient_dim)[:, 0] > 0

    def hits(self, P, U):
        P = _as_rows(P, self.ambient_dim)
        U = _as_rows(U, self.ambient_dim)
        u1 = np.broadcast_to(U[:, 0], (max(len(P), len(U)),))
        p1 = np.broadcast_to(P[:, 0], u1.shape)
        inward = u1 < -1e-14
        with np.errstate(divide="ignore"):
            return np.where(inward, p1 / np.where(inward, -u1, 1.0), np.inf)

    def bdist(self, P):
        return _as_rows(P, self.ambient_dim)[:, 0].copy()

    def normals(self, z):
        e = np.zeros(self.ambient_dim)
        e[0] = -1.0
        return [e]

    def support(self, n):
        n = np.asarray(n, dtype=float)
        if n[0] <= 0 and np.allclose(n[1:], 0.0, atol=1e-14):
            return 0.0
        return math.inf

    def scaled(self, c, about):
        a = np.asarray(about, dtype=float)
        if a[0] != 0:
            raise PreconditionError("a halfspace can only be scaled about a boundary point")
        return HalfSpace(self.ambient_dim, a + c * (self.base_point - a), self.field)


class SublevelSet(ConvexBody):
    """{g < 0} for a convex oracle g, contained in the ball of `bound` around base_point.

    g must accept an array of shape (m, n) and return shape (m,).
    """

    kind = "sublevel"
    exact_hits = False
    exact_bdist = False

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], bound: float, base_point,
                 field: ScalarField = ScalarField.REAL, grad: Callable | None = None, name: str = "sublevel"):
        if not bound > 0:
            raise InputError("sublevel sets need a positive bounding radius")
        self.g = g
        self.grad = grad
        self.bound = float(bound)
        self.name = name
        bp = np.asarray(base_point, dtype=float)
        super().__init__(len(bp), field, bp)
        self._check_base_point()

    @property
    def radius(self) -> float:
        return self.bound

    def inside(self, X):
        X = _as_rows(X, self.ambient_dim)
        return np.asarray(self.g(X)) < 0

    def hits(self, P, U):
        return self._bisect_hits(P, U)

    def normals(self, z):
        z = np.asarray(z, dtype=float)
        if self.grad is not None:
            g = np.asarray(self.grad(z), dtype=float)
        else:
            h = 1e-7 * max(1.0, self.bound)
            E = np.eye(self.ambient_dim) * h
            g = (np.asarray(self.g(z + E)) - np.asarray(self.g(z - E))) / (2 * h)
        return [g / np.linalg.norm(g)]

    @cached_property
    def _boundary_cloud(self) -> np.ndarray:
        U = np.asarray(sphere_points(self.ambient_dim, 2048 if self.ambient_dim > 2 else 4096))
        return self.base_point + self.hits(self.base_point[None], U)[:, None] * U

    def support(self, n):
        # sampled estimate; exact for the cloud, slightly low for the body
        return float(np.max(self._boundary_cloud @ np.asarray(n, dtype=float)))

    def scaled(self, c, about):
        a = np.asarray(about, dtype=float)
        g = self.g
        return SublevelSet(lambda X: g(a + (X - a) / c), self.bound * c + np.linalg.norm(self.base_point - a) * abs(c - 1),
                           a + c * (self.base_point - a), self.field, name=self.name)

    def describe(self):
        d = super().describe()
        d.update(name=self.name, bound=self.bound)
        return d


# --------------------------------------------------------------------------
# Public operations
# --------------------------------------------------------------------------


def _point(body: ConvexBody, x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (body.ambient_dim,):
        raise InputError(f"expected a point with {body.ambient_dim} real coordinates")
    return a


def _interior(body: ConvexBody, p) -> np.ndarray:
    p = _point(body, p)
    if not body.inside(p[None])[0]:
        raise PreconditionError(f"point {p.tolist()} is not interior")
    return p


def contains(body: ConvexBody, x) -> bool:
    return bool(body.inside(_point(body, x)[None])[0])


def ray_hit(body: ConvexBody, ray: Ray) -> float:
    p = _interior(body, ray.origin)
    return float(body.hits(p[None], ray.direction[None])[0])


def boundary_distance(body: ConvexBody, p) -> float:
    p = _interior(body, p)
    return float(body.bdist(p[None])[0])


def boundary_distance_bracket(body: ConvexBody, p) -> tuple[float, float]:
    p = _interior(body, p)
    lo, hi = body.bdist_bracket(p[None])
    return float(lo[0]), float(hi[0])


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise PreconditionError("direction must be nonzero")
    return v / nv


def line_distance(body: ConvexBody, p, v, grid: int = 64) -> float:
    p = _interior(body, p)
    u = _unit(_point(body, v))
    return float(line_distances(body, p[None], u[None], grid)[0])


def line_distances(body: ConvexBody, P: np.ndarray, V: np.ndarray, grid: int = 64) -> np.ndarray:
    """Vectorized distance to the boundary along the K-line through each row."""
    P = _as_rows(P, body.ambient_dim)
    V = _as_rows(V, body.ambient_dim)
    U = V / np.linalg.norm(V, axis=1, keepdims=True)
    if not body.is_complex:
        return np.minimum(body.hits(P, U), body.hits(P, -U))
    JU = apply_j(U)
    m = len(P)
    # theta in [0, pi) for both signs covers the full circle of unit complex multiples
    th = 2.0 * np.pi * np.arange(2 * grid) / (2 * grid)
    W = np.cos(th)[None, :, None] * U[:, None, :] + np.sin(th)[None, :, None] * JU[:, None, :]
    Pr = np.repeat(P, len(th), axis=0)
    h = body.hits(Pr, W.reshape(-1, body.ambient_dim)).reshape(m, len(th))
    i = np.argmin(h, axis=1)
    best = h[np.arange(m), i]
    a = th[i] - 2 * np.pi / len(th)
    b = th[i] + 2 * np.pi / len(th)

    def f(t):
        w = np.cos(t)[:, None] * U + np.sin(t)[:, None] * JU
        return body.hits(P, w)

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(60):
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - GOLDEN * (b - a), d)
        d_new = np.where(left, c, a + GOLDEN * (b - a))
        fx = f(np.where(left, c_new, d_new))
        fc, fd = np.where(left, fx, fd), np.where(left, fc, fx)
        c, d = c_new, d_new
    return np.minimum(best, np.minimum(fc, fd))


def plane_slice_distance(body: ConvexBody, p, frame, count: int | None = None) -> tuple[float, np.ndarray]:
    """min over unit w in span(frame) of the ray hit from p, with the minimizing direction."""
    p = _interior(body, p)
    F = np.asarray(getattr(frame, "columns", frame), dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != body.ambient_dim:
        raise InputError("frame columns must live in the ambient space")
    m = F.shape[1]
    if not np.allclose(F.T @ F, np.eye(m), atol=1e-10):
        raise PreconditionError("frame columns are not orthonormal")
    count = count or 256 * m
    return _min_hit_in_span(body, p, F, count)


def boundary_points(body: ConvexBody, directions: np.ndarray) -> np.ndarray:
    """Radial projections of the base point along the given unit directions."""
    U = _as_rows(directions, body.ambient_dim)
    h = body.hits(body.base_point[None], U)
    return body.base_point + h[:, None] * U


def midpoint_convexity_violations(body: SublevelSet, n_pairs: int = 1000, seed: int = 0,
                                  tol: float = 1e-12) -> list[dict]:
    """Sample g((x+y)/2) <= (g(x)+g(y))/2 on random pairs in the bounding ball."""
    rng = np.random.default_rng(seed)
    n = body.ambient_dim
    X = body.base_point + body.bound * rng.uniform(-1, 1, (n_pairs, n))
    Y = body.base_point + body.bound * rng.uniform(-1, 1, (n_pairs, n))
    gx, gy, gm = (np.asarray(body.g(Z)) for Z in (X, Y, 0.5 * (X + Y)))
    bad = gm > 0.5 * (gx + gy) + tol * (1 + np.abs(gx) + np.abs(gy))
    return [{"x": X[i].tolist(), "y": Y[i].tolist(), "excess": float(gm[i] - 0.5 * (gx[i] + gy[i]))}
            for i in np.nonzero(bad)[0]]


# --------------------------------------------------------------------------
# Fixtures
# --------------------------------------------------------------------------


def unit_ball(dim: int, field: ScalarField = ScalarField.REAL) -> PBall:
    n = 2 * dim if field is ScalarField.COMPLEX else dim
    return PBall(2.0, n, field=field)


def cube(dim: int, half_width: float = 1.0) -> Polytope:
    A = np.vstack([np.eye(dim), -np.eye(dim)])
    return Polytope(A, np.full(2 * dim, half_width), np.zeros(dim))


def ellipse() -> Ellipsoid:
    # x^2/4 + y^2 < 1
    return Ellipsoid([0.0, 0.0], np.diag([0.25, 1.0]))


def quartic_body() -> SublevelSet:
    # {y^4 < x < 2, |y| < 1.1}
    def g(X):
        x, y = X[:, 0], X[:, 1]
        return np.maximum(np.maximum(y ** 4 - x, x - 2.0), np.abs(y) - 1.1)

    return SublevelSet(g, 1.6, [1.0, 0.0], name="quartic")


def rounded_quartic_body() -> SublevelSet:
    # {y^4 < x < 2 - y^2}: same flat point at the origin, no segments in the boundary
    def g(X):
        x, y = X[:, 0], X[:, 1]
        return np.maximum(y ** 4 - x, x + y ** 2 - 2.0)

    return SublevelSet(g, 1.5, [1.0, 0.0], name="rounded-quartic")


def graph_domain(f: Callable[[np.ndarray], np.ndarray], dim: int, height: float = 2.0,
                 width: float = 1.0, name: str = "graph") -> SublevelSet:
    """{x_1 > f(y)} truncated by x_1 < height and |y_i| < width, y = (x_2, ..., x_d)."""

    def g(X):
        x, Y = X[:, 0], X[:, 1:]
        return np.maximum(np.maximum(f(Y) - x, x - height), np.max(np.abs(Y), axis=1) - width)

    bound = math.hypot(height, width * math.sqrt(dim - 1))
    return SublevelSet(g, bound, np.eye(dim)[0] * (0.5 * height), name=name)


# --------------------------------------------------------------------------
# JSON domain files
# --------------------------------------------------------------------------

_COMMON = {"type", "field", "dim", "base_point"}
_VARIANT_KEYS = {
    "polytope": {"A", "b"},
    "ellipsoid": {"center", "shape"},
    "pball": {"p", "scale", "center"},
    "halfspace": set(),
    "graph": {"coeffs", "height", "width"},
}
_REQUIRED = {"polytope": {"A", "b"}, "ellipsoid": {"shape"}, "pball": {"p"}, "halfspace": set(),
             "graph": {"coeffs"}}


def parse_domain(spec: dict) -> ConvexBody:
    if not isinstance(spec, dict):
        raise InputError("domain specification must be a JSON object")
    kind = spec.get("type")
    if kind not in _VARIANT_KEYS:
        raise InputError(f"key 'type': unknown domain type {kind!r}")
    allowed = _COMMON | _VARIANT_KEYS[kind]
    for key in spec:
        if key not in allowed:
            raise InputError(f"key {key!r}: not allowed for domain type {kind!r}")
    for key in _REQUIRED[kind] | {"dim"}:
        if key not in spec:
            raise InputError(f"key {key!r}: missing")
    try:
        field = ScalarField(spec.get("field", "real"))
    except ValueError:
        raise InputError(f"key 'field': expected 'real' or 'complex', got {spec.get('field')!r}") from None
    dim = spec["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise InputError("key 'dim': expected a positive integer")
    n = 2 * dim if field is ScalarField.COMPLEX else dim
    bp = spec.get("base_point")
    if bp is not None:
        bp = _vector(bp, n, "base_point")
    if kind == "polytope":
        A = _matrix(spec["A"], None, n, "A")
        b = _vector(spec["b"], len(A), "b")
        return Polytope(A, b, bp, field)
    if kind == "ellipsoid":
        Q = _matrix(spec["shape"], n, n, "shape")
        c = _vector(spec.get("center", [0.0] * n), n, "center")
        return Ellipsoid(c, Q, bp, field)
    if kind == "pball":
        p = spec["p"]
        p = math.inf if p in ("inf", "infinity") else p
        if not isinstance(p, (int, float)) or isinstance(p, bool):
            raise InputError("key 'p': expected a number or 'inf'")
        scale = spec.get("scale", 1.0)
        if not isinstance(scale, (int, float)) or isinstance(scale, bool):
            raise InputError("key 'scale': expected a number")
        c = _vector(spec.get("center", [0.0] * n), n, "center")
        return PBall(float(p), n, float(scale), c, bp, field)
    if kind == "halfspace":
        return HalfSpace(n, bp, field)
    from .polynomials import PolynomialR

    if field is ScalarField.COMPLEX:
        raise InputError("key 'field': graph domains are real")
    poly = PolynomialR.from_json({"coeffs": spec["coeffs"]}, dim=n - 1)
    return graph_domain(poly.evaluate, n, float(spec.get("height", 2.0)), float(spec.get("width", 1.0)),
                        name="graph")


def load_domain(path: str | Path) -> ConvexBody:
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"domain file is not valid JSON: {exc}") from None
    return parse_domain(spec)


def _vector(x, n: int, key: str) -> np.ndarray:
    try:
        a = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"key {key!r}: expected a list of numbers") from None
    if a.shape != (n,):
        raise InputError(f"key {key!r}: expected {n} numbers")
    return a


def _matrix(x, rows: int | None, cols: int, key: str) -> np.ndarray:
    try:
        a = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"key {key!r}: expected a list of rows") from None
    if a.ndim != 2 or a.shape[1] != cols or (rows is not None and a.shape[0] != rows):
        raise InputError(f"key {key!r}: expected a matrix with {cols} columns")
    return a
