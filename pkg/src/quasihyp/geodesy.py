"""Integrated k-quasi-hyperbolic distances with certified two-sided brackets.

Upper bounds come from optimizing polyline lengths; lower bounds come from
supporting hyperplanes: if H misses the body then |log(d(q,H)/d(p,H))| never
exceeds the distance from p to q.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .domains import (ConvexBody, Polytope, _interior, _point, boundary_points, min_hit_batch, to_complex)
from .errors import CheckFailed, InputError, PreconditionError
from .metrics import TOL_OPT, Frame, delta_k, q_values

QUAD_TOL = 1e-5
SCHEDULE = (9, 17, 33, 65)


@dataclass(frozen=True)
class PolylinePath:
    vertices: np.ndarray
    quad_order: int = 4

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        if V.ndim != 2 or len(V) < 1:
            raise InputError("a path needs a (m, n) array of vertices")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    def reversed(self) -> PolylinePath:
        return PolylinePath(self.vertices[::-1], self.quad_order)

    def validate(self, body: ConvexBody) -> None:
        V = self.vertices
        if V.shape[1] != body.ambient_dim:
            raise InputError("path dimension does not match the body")
        if not np.all(body.inside(V)):
            raise PreconditionError("path vertices must be interior")
        if len(V) > 1 and not np.all(body.inside(0.5 * (V[1:] + V[:-1]))):
            raise PreconditionError("path segment leaves the body")

    def digest(self) -> str:
        return hashlib.sha256(np.round(self.vertices, 12).tobytes()).hexdigest()[:16]

    def to_json(self) -> list:
        return self.vertices.tolist()

    @classmethod
    def from_json(cls, data) -> PolylinePath:
        return cls(np.asarray(data, dtype=float))


@dataclass
class DistanceResult:
    upper: float
    lower: float
    path: PolylinePath
    log: list[dict] = field(default_factory=list)
    lower_witness: dict | None = None

    def to_json(self) -> dict:
        return {"upper": self.upper, "lower": self.lower, "path": self.path.to_json(), "log": self.log,
                "lower_witness": self.lower_witness}


@dataclass(frozen=True)
class Hyperplane:
    """{y : <normal, y> = offset} with the body on the side <normal, y> < offset."""

    normal: np.ndarray
    offset: float


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


def _bulk_q(body: ConvexBody, P: np.ndarray, V: np.ndarray, k: int, opts: dict) -> np.ndarray:
    return q_values(body, P, V, k, **opts)


def segment_integrals(body: ConvexBody, A: np.ndarray, B: np.ndarray, k: int, order: int = 4,
                      tol: float = QUAD_TOL, max_depth: int = 40, opts: dict | None = None):
    """Integral of q^(k) along each straight segment A_i -> B_i; returns (values, error estimates)."""
    opts = opts or {}
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    nseg = len(A)
    x, w = _gauss(order)
    total = np.zeros(nseg)
    err = np.zeros(nseg)
    D = B - A
    seg = np.arange(nseg)
    t0 = np.zeros(nseg)
    t1 = np.ones(nseg)
    nonzero = np.linalg.norm(D, axis=1) > 0
    seg, t0, t1 = seg[nonzero], t0[nonzero], t1[nonzero]
    if len(seg) == 0:
        return total, err
    # split panels whose endpoint boundary distances differ by more than 2x
    for _ in range(max_depth):
        e0 = _depth(body, A[seg] + t0[:, None] * D[seg])
        e1 = _depth(body, A[seg] + t1[:, None] * D[seg])
        bad = np.maximum(e0, e1) > 2.0 * np.minimum(e0, e1)
        if not np.any(bad):
            break
        mid = 0.5 * (t0 + t1)
        seg = np.concatenate([seg[~bad], seg[bad], seg[bad]])
        t0, t1 = (np.concatenate([t0[~bad], t0[bad], mid[bad]]),
                  np.concatenate([t1[~bad], mid[bad], t1[bad]]))
    for depth in range(max_depth + 1):
        h = t1 - t0
        mid = 0.5 * (t0 + t1)
        # nodes: whole panel, left half, right half
        tn = np.concatenate([mid[:, None] + 0.5 * h[:, None] * x[None],
                             (t0 + 0.25 * h)[:, None] + 0.25 * h[:, None] * x[None],
                             (mid + 0.25 * h)[:, None] + 0.25 * h[:, None] * x[None]], axis=1)
        P = A[seg][:, None, :] + tn[:, :, None] * D[seg][:, None, :]
        Vv = np.repeat(D[seg][:, None, :], tn.shape[1], axis=1)
        q = _bulk_q(body, P.reshape(-1, P.shape[-1]), Vv.reshape(-1, P.shape[-1]), k, opts).reshape(len(seg), -1)
        coarse = 0.5 * h * (q[:, :order] @ w)
        fine = 0.25 * h * (q[:, order:2 * order] @ w + q[:, 2 * order:] @ w)
        diff = np.abs(fine - coarse)
        ok = diff <= tol * np.abs(fine) + 1e-300
        if depth == max_depth:
            ok[:] = True
        np.add.at(total, seg[ok], fine[ok])
        np.add.at(err, seg[ok], diff[ok])
        if np.all(ok):
            break
        seg, t0, t1, mid = seg[~ok], t0[~ok], t1[~ok], mid[~ok]
        seg = np.concatenate([seg, seg])
        t0, t1 = np.concatenate([t0, mid]), np.concatenate([mid, t1])
    return total, err


@lru_cache(maxsize=None)
def _gauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def _depth(body: ConvexBody, P: np.ndarray) -> np.ndarray:
    if body.exact_bdist:
        return body.bdist(P)
    # cheap proxy for bodies whose boundary distance needs an optimization
    U = np.eye(body.ambient_dim)
    H = np.stack([body.hits(P, np.broadcast_to(s * u, P.shape)) for u in U for s in (1.0, -1.0)])
    return np.min(H, axis=0)


def _path_integral(body: ConvexBody, V: np.ndarray, k: int, order: int = 4, tol: float = QUAD_TOL,
                   opts: dict | None = None) -> tuple[float, float]:
    if len(V) < 2:
        return 0.0, 0.0
    vals, err = segment_integrals(body, V[:-1], V[1:], k, order, tol, opts=opts)
    total = float(np.sum(vals))
    # the error estimate doubles as the upper-bound pad, plus slack for floating-point summation
    return total, float(np.sum(err)) + 1e-12 * abs(total)


def path_length_qk(body: ConvexBody, path: PolylinePath, k: int, tol: float = QUAD_TOL, **opts) -> float:
    """Integrated q^(k) length of a polyline."""
    if not body.bounded:
        raise PreconditionError("curve operations need a bounded body")
    path.validate(body)
    return _path_integral(body, path.vertices, k, path.quad_order, tol, opts)[0]


# --------------------------------------------------------------------------
# Lower bounds
# --------------------------------------------------------------------------


def _hyperplane_distances(N: np.ndarray, c: np.ndarray, Y: np.ndarray, cplx: bool) -> np.ndarray:
    """Distances from rows of Y to hyperplanes (N_h, c_h); shape (len(Y), len(N))."""
    gap = c[None, :] - Y @ N.T
    if not cplx:
        return gap
    # the complex hyperplane through c n inside the real supporting hyperplane
    Z = to_complex(Y)
    Nz = to_complex(N)
    base = c[:, None] * Nz
    inner = Z @ Nz.conj().T - np.sum(base * Nz.conj(), axis=1)[None, :]
    return np.abs(inner)


def hyperplane_lower_bound(body: ConvexBody, p, q, H: Hyperplane) -> float:
    p = _point(body, p)
    q = _point(body, q)
    n = np.asarray(H.normal, dtype=float)
    nn = np.linalg.norm(n)
    if nn == 0:
        raise InputError("hyperplane normal must be nonzero")
    n, c = n / nn, H.offset / nn
    scale = max(1.0, body.diameter) if body.bounded else max(1.0, float(np.linalg.norm(p)))
    if body.support(n) > c + 1e-9 * scale:
        raise PreconditionError("the hyperplane meets the body")
    d = _hyperplane_distances(n[None], np.array([c]), np.vstack([p, q]), body.is_complex)[:, 0]
    if np.any(d <= 0):
        raise PreconditionError("points must lie strictly on the body side of the hyperplane")
    return abs(math.log(d[1] / d[0]))


def supporting_family(body: ConvexBody, anchors: np.ndarray, n_samples: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals and offsets of supporting hyperplanes relevant to the anchor points."""
    anchors = np.atleast_2d(anchors)
    normals = []
    if isinstance(body, Polytope):
        normals.extend(body.A / np.linalg.norm(body.A, axis=1, keepdims=True))
    pts = []
    p0 = body.base_point
    # radial projections of points spread along the anchors' span and beyond
    if len(anchors) >= 2:
        a, b = anchors[0], anchors[-1]
        ts = np.linspace(-0.5, 1.5, n_samples)
        spread = a[None] + ts[:, None] * (b - a)[None]
    else:
        spread = anchors
    for y in np.vstack([spread, anchors]):
        off = y - p0
        if np.linalg.norm(off) > 1e-12:
            pts.append(off / np.linalg.norm(off))
    if pts:
        pts = boundary_points(body, np.array(pts))
        for z in pts:
            normals.extend(body.normals(z))
    # line hits of consecutive anchors and the nearest boundary points of each anchor
    for i in range(len(anchors)):
        y = anchors[i]
        hmin, w = min_hit_batch(body, y, np.eye(body.ambient_dim)[None], 256 * body.ambient_dim)
        if math.isfinite(hmin[0]):
            normals.extend(body.normals(y + hmin[0] * w[0] / np.linalg.norm(w[0])))
        for j in range(i + 1, len(anchors)):
            u = anchors[j] - y
            if np.linalg.norm(u) == 0:
                continue
            u = u / np.linalg.norm(u)
            for s in (1.0, -1.0):
                h = body.hits(y[None], (s * u)[None])[0]
                if math.isfinite(h):
                    normals.extend(body.normals(y + h * s * u))
    N = np.array(normals)
    N = N / np.linalg.norm(N, axis=1, keepdims=True)
    N = np.unique(np.round(N, 13), axis=0)
    c = np.array([body.support(n) for n in N])
    keep = np.isfinite(c)
    return N[keep], c[keep]


def lower_bound_pairs(body: ConvexBody, P: np.ndarray, Q: np.ndarray, family=None) -> tuple[np.ndarray, np.ndarray]:
    """Best hyperplane and line lower bound for each pair (P_i, Q_i); returns (values, source index)."""
    P = np.atleast_2d(P)
    Q = np.atleast_2d(Q)
    if family is None:
        family = supporting_family(body, np.vstack([P, Q]))
    N, c = family
    dp = _hyperplane_distances(N, c, P, body.is_complex)
    dq = _hyperplane_distances(N, c, Q, body.is_complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.abs(np.log(dq / dp))
    L = np.where(np.isfinite(L), L, 0.0)
    best = np.max(L, axis=1) if L.shape[1] else np.zeros(len(P))
    src = np.argmax(L, axis=1) if L.shape[1] else np.zeros(len(P), dtype=int)
    # line version: boundary points of the real line through p and q
    U = Q - P
    nu = np.linalg.norm(U, axis=1)
    moving = nu > 0
    if np.any(moving):
        Uu = U[moving] / nu[moving, None]
        hf = body.hits(P[moving], Uu)
        hb = body.hits(P[moving], -Uu)
        with np.errstate(divide="ignore", invalid="ignore"):
            lf = np.abs(np.log((hf - nu[moving]) / hf))
            lb = np.abs(np.log((hb + nu[moving]) / hb))
        line = np.where(np.isfinite(lf), lf, 0.0)
        line = np.maximum(line, np.where(np.isfinite(lb), lb, 0.0))
        better = line > best[moving]
        idx = np.nonzero(moving)[0]
        best[idx[better]] = line[better]
        src[idx[better]] = -1
    return best, src


# --------------------------------------------------------------------------
# Distance optimization
# --------------------------------------------------------------------------


def _resample(points: np.ndarray, m: int) -> np.ndarray:
    # m vertices equally spaced in Euclidean arclength along a polyline
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(points[:1], m, axis=0)
    t = np.linspace(0.0, s[-1], m)
    return np.column_stack([np.interp(t, s, points[:, j]) for j in range(points.shape[1])])


def _radial_candidate(body: ConvexBody, p: np.ndarray, q: np.ndarray, m: int) -> np.ndarray | None:
    # interpolate in (direction, relative radius) around the base point, lifting toward the center
    p0 = body.base_point
    a, b = p - p0, q - p0
    ra, rb = np.linalg.norm(a), np.linalg.norm(b)
    if ra < 1e-12 or rb < 1e-12:
        return None
    ua, ub = a / ra, b / rb
    wa, wb = body.hits(p0[None], np.vstack([ua, ub]))
    rho_a, rho_b = ra / wa, rb / wb
    ang = math.acos(max(-1.0, min(1.0, float(ua @ ub))))
    s = np.linspace(0.0, 1.0, m)
    if ang < 1e-9:
        dirs = np.repeat(ua[None], m, axis=0)
    elif ang > math.pi - 1e-6:
        return None
    else:
        dirs = (np.sin((1 - s) * ang)[:, None] * ua + np.sin(s * ang)[:, None] * ub) / math.sin(ang)
    lift = 1.0 - 0.5 * math.sin(0.5 * ang) * np.sin(np.pi * s)
    rho = ((1 - s) * rho_a + s * rho_b) * lift
    w = body.hits(p0[None], dirs)
    V = p0 + (rho * w)[:, None] * dirs
    V[0], V[-1] = p, q
    return V if np.all(body.inside(V)) else None


def _initial_paths(body: ConvexBody, p: np.ndarray, q: np.ndarray, m: int) -> list[np.ndarray]:
    cands = [np.linspace(p, q, m)]
    p0 = body.base_point
    if np.linalg.norm(p - p0) > 1e-12 and np.linalg.norm(q - p0) > 1e-12:
        cands.append(_resample(np.vstack([p, p0, q]), m))
    rad = _radial_candidate(body, p, q, m)
    if rad is not None:
        cands.append(rad)
    return cands


def _descend(body: ConvexBody, V: np.ndarray, k: int, order: int, opts: dict, max_sweeps: int = 60,
             rel_tol: float = 1e-7) -> np.ndarray:
    """Red-black coordinate descent on interior vertices with adaptive probe steps."""
    V = V.copy()
    m, n = V.shape
    if m <= 2:
        return V
    seg_cost, _ = segment_integrals(body, V[:-1], V[1:], k, order, QUAD_TOL * 0.1, opts=opts)
    step = 0.25 * _depth(body, V)
    floor = 1e-7 * max(1.0, body.diameter)
    E = np.vstack([np.eye(n), -np.eye(n)])
    quiet = 0
    for _ in range(max_sweeps):
        before = float(np.sum(seg_cost))
        for parity in (1, 0):
            idx = np.arange(1, m - 1)
            idx = idx[(idx % 2) == parity]
            idx = idx[step[idx] > floor]
            if len(idx) == 0:
                continue
            cand = V[idx][:, None, :] + step[idx][:, None, None] * E[None]
            flat = cand.reshape(-1, n)
            left = np.repeat(V[idx - 1], len(E), axis=0)
            right = np.repeat(V[idx + 1], len(E), axis=0)
            ok = body.inside(flat)
            cost = np.full(len(flat), np.inf)
            if np.any(ok):
                c1, _ = segment_integrals(body, left[ok], flat[ok], k, order, QUAD_TOL * 0.1, opts=opts)
                c2, _ = segment_integrals(body, flat[ok], right[ok], k, order, QUAD_TOL * 0.1, opts=opts)
                cost[ok] = c1 + c2
            cost = cost.reshape(len(idx), len(E))
            j = np.argmin(cost, axis=1)
            bestc = cost[np.arange(len(idx)), j]
            current = seg_cost[idx - 1] + seg_cost[idx]
            imp = bestc < current * (1 - 1e-12)
            if np.any(imp):
                ii = idx[imp]
                V[ii] = cand[np.arange(len(idx)), j][imp]
                c1, _ = segment_integrals(body, V[ii - 1], V[ii], k, order, QUAD_TOL * 0.1, opts=opts)
                c2, _ = segment_integrals(body, V[ii], V[ii + 1], k, order, QUAD_TOL * 0.1, opts=opts)
                seg_cost[ii - 1], seg_cost[ii] = c1, c2
            step[idx[imp]] *= 1.5
            step[idx[~imp]] *= 0.5
        after = float(np.sum(seg_cost))
        quiet = quiet + 1 if before - after <= rel_tol * after else 0
        if quiet >= 2 or not np.any(step[1:-1] > floor):
            break
    return V


def _double(V: np.ndarray) -> np.ndarray:
    out = np.empty((2 * len(V) - 1, V.shape[1]))
    out[0::2] = V
    out[1::2] = 0.5 * (V[1:] + V[:-1])
    return out


def distance_qk(body: ConvexBody, p, q, k: int, *, schedule: tuple[int, ...] = SCHEDULE, round_tol: float = 1e-4,
                target: float | None = None, initial_paths: list[np.ndarray] | None = None,
                max_sweeps: int = 60, **opts) -> DistanceResult:
    """Two-sided bracket for the integrated k-quasi-hyperbolic distance."""
    if not body.bounded:
        raise PreconditionError("distance computations need a bounded body")
    p = _interior(body, p)
    q = _interior(body, q)
    if not 1 <= k <= body.dim:
        raise PreconditionError(f"k must lie in 1..{body.dim}")
    if np.array_equal(p, q):
        return DistanceResult(0.0, 0.0, PolylinePath(p[None]), [{"round": 0, "vertices": 1, "upper": 0.0}])
    order = 4
    m0 = schedule[0]
    cands = _initial_paths(body, p, q, m0)
    for extra in initial_paths or []:
        extra = np.asarray(extra, dtype=float)
        if np.all(body.inside(extra)):
            cands.append(_resample(extra, m0) if len(extra) != m0 else extra)
    log = []
    scored = []
    for i, V in enumerate(cands):
        L0, e0 = _path_integral(body, V, k, order, QUAD_TOL, opts)
        scored.append((L0 + e0, PolylinePath(V).digest(), V))
        log.append({"round": 0, "candidate": i, "vertices": len(V), "upper": L0 + e0})
    best_u, _, best_V = min(scored, key=lambda z: (z[0], z[1]))
    if target is None or best_u > target:
        refined = []
        for u0, dig, V in scored:
            W = _descend(body, V, k, order, opts, max_sweeps)
            L, e = _path_integral(body, W, k, order, QUAD_TOL, opts)
            refined.append((min(L + e, u0), dig, W if L + e < u0 else V))
        best_u, _, best_V = min(refined, key=lambda z: (z[0], z[1]))
        log.append({"round": 1, "vertices": len(best_V), "upper": best_u})
        for r, m in enumerate(schedule[1:], start=2):
            if target is not None and best_u <= target:
                break
            W = _descend(body, _double(best_V), k, order, opts, max_sweeps)
            L, e = _path_integral(body, W, k, order, QUAD_TOL, opts)
            prev = best_u
            if L + e < best_u:
                best_u, best_V = L + e, W
            log.append({"round": r, "vertices": len(W), "upper": best_u})
            if prev - best_u < round_tol * best_u:
                break
    lower, src = lower_bound_pairs(body, p[None], q[None])
    lower = float(lower[0])
    if lower > best_u:
        raise CheckFailed(f"hyperplane lower bound {lower} exceeds the optimized upper bound {best_u}")
    return DistanceResult(best_u, lower, PolylinePath(best_V), log,
                          {"kind": "line" if src[0] < 0 else "hyperplane"})


# --------------------------------------------------------------------------
# Hilbert metric and quasi-geodesics
# --------------------------------------------------------------------------


def hilbert_distance(body: ConvexBody, p, q) -> float:
    """Cross-ratio distance along the chord through p and q."""
    if body.is_complex:
        raise PreconditionError("the Hilbert distance is defined here for real bodies only")
    if not body.bounded:
        raise PreconditionError("the Hilbert distance needs a bounded body")
    p = _interior(body, p)
    q = _interior(body, q)
    L = float(np.linalg.norm(q - p))
    if L == 0:
        return 0.0
    u = (q - p) / L
    tb, ta = body.hits(np.vstack([p, p]), np.vstack([u, -u]))
    return 0.5 * math.log((ta + L) * tb / (ta * (tb - L)))


@dataclass(frozen=True)
class RadialQuasiGeodesic:
    x: np.ndarray
    p: np.ndarray
    epsilon: float
    frame: Frame
    interval: tuple[float, float] = (0.0, 8.0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.x + np.exp(-t)[..., None] * (self.p - self.x)


def radial_quasi_geodesic(body: ConvexBody, x, p, k: int, t_max: float = 8.0, **opts) -> RadialQuasiGeodesic:
    """sigma(t) = x + e^{-t}(p - x) and its quasi-geodesic constant epsilon."""
    p = _interior(body, p)
    x = _point(body, x)
    w = x - p
    r = float(np.linalg.norm(w))
    if r == 0:
        raise PreconditionError("x must differ from p")
    h = float(body.hits(p[None], (w / r)[None])[0])
    if abs(h - r) > 1e-8 * max(1.0, body.diameter):
        raise PreconditionError(f"point {x.tolist()} is not on the boundary")
    val, frame = delta_k(body, p, w, k, **opts)
    eps = val / r
    if not eps > 0:
        raise PreconditionError("epsilon vanishes: the direction is flat and degenerate")
    return RadialQuasiGeodesic(x, p, min(eps, 1.0), frame, (0.0, float(t_max)))


@dataclass
class QuasiGeodesicReport:
    A: float
    B: float
    worst_upper_margin: float
    worst_lower_margin: float
    verdict: str
    pairs: list[dict]

    def to_json(self) -> dict:
        return {"A": self.A, "B": self.B, "worst_upper_margin": self.worst_upper_margin,
                "worst_lower_margin": self.worst_lower_margin, "verdict": self.verdict, "pairs": self.pairs}


def quasi_geodesic_check(body: ConvexBody, curve: Callable, k: int, A: float, B: float, pairs: int = 100, *,
                         interval: tuple[float, float] | None = None, seed: int = 0, tol: float = 1e-4,
                         arc_points: int = 17, **opts) -> QuasiGeodesicReport:
    """Check (1/A)|t-s| - B <= dist(sigma(s), sigma(t)) <= A|t-s| + B on sampled parameter pairs."""
    lo, hi = interval or getattr(curve, "interval")
    rng = np.random.default_rng(seed)
    ST = np.sort(rng.uniform(lo, hi, (pairs, 2)), axis=1)
    records = []
    family = None
    for s, t in ST:
        P, Q = np.asarray(curve(s), dtype=float), np.asarray(curve(t), dtype=float)
        gap = abs(t - s)
        allow_up, need_low = A * gap + B, gap / A - B
        if np.allclose(P, Q, rtol=0, atol=0):
            up = low = 0.0
        else:
            arc = np.asarray(curve(np.linspace(s, t, arc_points)), dtype=float)
            if np.linalg.norm(arc[-1] - arc[0]) > 0 and _is_straight(arc):
                arc = np.vstack([arc[0], arc[-1]])
            L, e = _path_integral(body, arc, k, 4, QUAD_TOL, opts)
            up = L + e
            if up > allow_up + tol:
                res = distance_qk(body, P, Q, k, target=allow_up, initial_paths=[arc], **opts)
                up = min(up, res.upper)
            if family is None:
                family = supporting_family(body, np.vstack([curve(np.linspace(lo, hi, 9))]))
            low = float(lower_bound_pairs(body, P[None], Q[None], family)[0][0])
            low = max(low, float(lower_bound_pairs(body, P[None], Q[None])[0][0]))
            if low > up:
                raise CheckFailed("lower bound above upper bound in the quasi-geodesic check")
        mu, ml = allow_up - up, low - need_low
        side_up = "pass" if mu >= -tol else ("fail" if low > allow_up + tol else "inconclusive")
        side_low = "pass" if ml >= -tol else ("fail" if up < need_low - tol else "inconclusive")
        records.append({"s": float(s), "t": float(t), "upper": up, "lower": low, "upper_margin": mu,
                        "lower_margin": ml, "upper_side": side_up, "lower_side": side_low})
    sides = [r["upper_side"] for r in records] + [r["lower_side"] for r in records]
    verdict = "fail" if "fail" in sides else ("inconclusive" if "inconclusive" in sides else "pass")
    return QuasiGeodesicReport(A, B, min(r["upper_margin"] for r in records),
                               min(r["lower_margin"] for r in records), verdict, records)


def _is_straight(arc: np.ndarray) -> bool:
    d = arc[-1] - arc[0]
    d = d / np.linalg.norm(d)
    off = (arc - arc[0]) - np.outer((arc - arc[0]) @ d, d)
    return bool(np.max(np.linalg.norm(off, axis=1)) <= 1e-12 * max(1.0, float(np.max(np.abs(arc)))))
