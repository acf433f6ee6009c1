"""Executable tests of the hyperbolicity characterization: expansion profiles,
flat-direction detection, four-point delta, and non-slim witness rectangles."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .domains import ConvexBody, Polytope, ScalarField, _interior, _point, boundary_points, plane_slice_distance, \
    sphere_points, to_complex
from .errors import InputError, PreconditionError
from .geodesy import lower_bound_pairs, supporting_family
from .metrics import Frame, quasi_normal_at

LAMBDA_MIN = 0.05
RESIDUAL_CAP = 0.1
GRID = (4, 14)


# --------------------------------------------------------------------------
# Expansion profiles
# --------------------------------------------------------------------------


@dataclass
class ExpansionProfile:
    x: np.ndarray
    p: np.ndarray
    frame: np.ndarray
    j: np.ndarray
    t: np.ndarray
    g: np.ndarray
    rejected: list = field(default_factory=list)

    @property
    def envelope(self) -> np.ndarray:
        """Largest non-decreasing-in-t minorant: g_env(t) = min over t' >= t of g(t')."""
        order = np.argsort(self.t)
        env = np.minimum.accumulate(self.g[order][::-1])[::-1]
        out = np.empty_like(env)
        out[order] = env
        return out

    def monotone_violations(self, rel_tol: float = 1e-6) -> int:
        order = np.argsort(self.t)
        gs = self.g[order]
        return int(np.sum(gs[:-1] > gs[1:] * (1 + rel_tol)))

    def frame_hash(self) -> str:
        return hashlib.sha256(np.round(self.frame, 10).tobytes()).hexdigest()[:12]

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "p": self.p.tolist(), "frame": self.frame.T.tolist(), "j": self.j.tolist(),
                "t": self.t.tolist(), "g": self.g.tolist(), "rejected": self.rejected}


@dataclass
class ExpansionFit:
    lam: float
    C: float
    residual: float
    verdict: str
    n_points: int

    def to_json(self) -> dict:
        return {"lambda": self.lam, "C": self.C, "residual": self.residual, "verdict": self.verdict,
                "n_points": self.n_points}


def _frame_columns(body: ConvexBody, V) -> np.ndarray:
    F = np.asarray(getattr(V, "columns", V), dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != body.ambient_dim:
        raise InputError("frame columns must live in the ambient space")
    return F


def expansion_profile(body: ConvexBody, x, p, V, grid: tuple[int, int] = GRID, count: int | None = None,
                      boundary_tol: float = 1e-8) -> ExpansionProfile:
    """g(t_j) = slice distance at x_t = (1-t)x + tp over the plane x_t + V, with t_j = 2^-j."""
    x = _point(body, x)
    p = _interior(body, p)
    w = x - p
    r = float(np.linalg.norm(w))
    if r == 0 or abs(float(body.hits(p[None], (w / r)[None])[0]) - r) > boundary_tol * max(1.0, body.diameter):
        raise PreconditionError(f"point {x.tolist()} is not on the boundary")
    F = _frame_columns(body, V)
    j_all = np.arange(grid[0], grid[1] + 1)
    js, ts, gs, rejected = [], [], [], []
    for j in j_all:
        t = 2.0 ** (-int(j))
        xt = (1 - t) * x + t * p
        if not body.inside(xt[None])[0]:
            rejected.append({"j": int(j), "reason": "grid point is not interior"})
            continue
        val, _ = plane_slice_distance(body, xt, F, count)
        if not (math.isfinite(val) and val > 0):
            rejected.append({"j": int(j), "reason": f"slice distance {val}"})
            continue
        js.append(int(j))
        ts.append(t)
        gs.append(val)
    return ExpansionProfile(x, p, F, np.array(js), np.array(ts), np.array(gs), rejected)


def fit_expansion(profile: ExpansionProfile, lam_min: float = LAMBDA_MIN,
                  residual_cap: float = RESIDUAL_CAP) -> ExpansionFit:
    """Least-squares exponent of log g against log t, and the smallest C for that exponent."""
    n = len(profile.t)
    if n < 4:
        return ExpansionFit(math.nan, math.nan, math.nan, "inconclusive", n)
    g = profile.envelope
    lt, lg = np.log(profile.t), np.log(g)
    A = np.column_stack([lt, np.ones(n)])
    (lam, icpt), *_ = np.linalg.lstsq(A, lg, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([lam, icpt]) - lg) ** 2)))
    # C over ordered pairs s <= t of g(s) / ((s/t)^lambda g(t))
    S, T = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ok = profile.t[S] <= profile.t[T]
    ratio = g[S] / ((profile.t[S] / profile.t[T]) ** lam * g[T])
    C = float(np.max(ratio[ok]))
    if lam < lam_min:
        verdict = "flat"
    elif resid < residual_cap:
        verdict = "expanding"
    else:
        verdict = "inconclusive"
    return ExpansionFit(float(lam), C, resid, verdict, n)


# --------------------------------------------------------------------------
# Audit over boundary points and frames
# --------------------------------------------------------------------------


def _complement_frames(body: ConvexBody, normal: np.ndarray, k: int, count: int,
                       rng: np.random.Generator) -> list[np.ndarray]:
    # orthonormal k-frames inside the K-orthogonal complement of the normal
    cplx = body.is_complex
    nu = to_complex(normal[None])[0] if cplx else normal
    B = null_space(nu.conj()[None])
    if B.shape[1] < k:
        return []
    out = []
    if not cplx:
        out.extend(B[:, list(c)] for c in _axis_choices(B.shape[1], k, 4))
    for _ in range(count):
        G = rng.standard_normal((B.shape[1], k))
        if cplx:
            G = G + 1j * rng.standard_normal((B.shape[1], k))
        Q = np.linalg.qr(G)[0]
        out.append(B @ Q)
    return [Frame.from_vectors(F, body.field).columns for F in out]


def _axis_choices(m: int, k: int, limit: int):
    from itertools import combinations

    for i, c in enumerate(combinations(range(m), k)):
        if i >= limit:
            return
        yield c


def _random_frames(body: ConvexBody, k: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    d = body.dim
    out = []
    for _ in range(count):
        G = rng.standard_normal((d, k))
        if body.is_complex:
            G = G + 1j * rng.standard_normal((d, k))
        out.append(Frame.from_vectors(np.linalg.qr(G)[0], body.field).columns)
    return out


@dataclass
class AuditRow:
    x: np.ndarray
    frame: np.ndarray
    fit: ExpansionFit
    tangential: bool

    def csv_row(self) -> list:
        return [" ".join(f"{c:.12g}" for c in self.x),
                hashlib.sha256(np.round(self.frame, 10).tobytes()).hexdigest()[:12],
                f"{self.fit.lam:.12g}", f"{self.fit.C:.12g}", f"{self.fit.residual:.12g}", self.fit.verdict]


@dataclass
class ExpansionAudit:
    k: int
    min_lambda: float
    max_C: float
    flat_witnesses: list
    verdict: str
    rows: list
    nontangential_min_lambda: float
    nontangential_max_C: float
    monotone_violations: int
    log: list

    def to_json(self) -> dict:
        return {"k": self.k, "min_lambda": self.min_lambda, "max_C": self.max_C,
                "flat_witnesses": [{"x": w["x"].tolist(), "frame": w["frame"].T.tolist(), "lambda": w["lambda"]}
                                   for w in self.flat_witnesses],
                "verdict": self.verdict, "nontangential_min_lambda": self.nontangential_min_lambda,
                "nontangential_max_C": self.nontangential_max_C, "monotone_violations": self.monotone_violations,
                "log": self.log, "n_profiles": len(self.rows)}


CSV_HEADER = ["x", "V_hash", "lambda", "C", "residual", "verdict"]


def expansion_audit(body: ConvexBody, k: int, n_boundary: int = 16, n_frames: int = 2,
                    grid: tuple[int, int] = GRID, seed: int = 0, n_nontangential: int | None = None,
                    points: np.ndarray | None = None, lam_min: float = LAMBDA_MIN) -> ExpansionAudit:
    """Fit expansion profiles at sampled boundary points for tangential and random k-frames."""
    if not body.bounded:
        raise PreconditionError("the expansion audit needs a bounded body")
    if not 1 <= k <= body.dim:
        raise PreconditionError(f"k must lie in 1..{body.dim}")
    rng = np.random.default_rng(seed)
    if points is None:
        points = boundary_points(body, np.asarray(sphere_points(body.ambient_dim, n_boundary)))
    points = np.atleast_2d(points)
    n_nontangential = n_frames if n_nontangential is None else n_nontangential
    p = body.base_point
    rows, flats, log = [], [], []
    violations = 0
    for x in points:
        normals = body.normals(x)
        tangential = []
        for nu in normals:
            tangential.extend(_complement_frames(body, nu, k, n_frames, rng))
        groups = [(True, tangential), (False, _random_frames(body, k, n_nontangential, rng))]
        for is_tan, frames in groups:
            for F in frames:
                try:
                    prof = expansion_profile(body, x, p, F, grid)
                except PreconditionError as exc:
                    log.append({"x": x.tolist(), "error": str(exc)})
                    continue
                if prof.rejected:
                    log.append({"x": x.tolist(), "rejected": prof.rejected})
                violations += prof.monotone_violations()
                fit = fit_expansion(prof, lam_min)
                rows.append(AuditRow(x, F, fit, is_tan))
                if is_tan and fit.verdict == "flat":
                    flats.append({"x": x, "frame": F, "lambda": fit.lam})
    tan = [r.fit for r in rows if r.tangential and math.isfinite(r.fit.lam)]
    non = [r.fit for r in rows if not r.tangential and math.isfinite(r.fit.lam)]
    min_lam = min((f.lam for f in tan), default=math.nan)
    max_C = max((f.C for f in tan), default=math.nan)
    if not tan:
        verdict = "vacuous (no tangential k-planes)"
    elif flats:
        verdict = "flat witnesses found"
    elif min_lam >= lam_min:
        verdict = "expansion holds (empirical)"
    else:
        verdict = "inconclusive"
    return ExpansionAudit(k, min_lam, max_C, flats, verdict, rows,
                          min((f.lam for f in non), default=math.nan), max((f.C for f in non), default=math.nan),
                          violations, log)


# --------------------------------------------------------------------------
# Four-point delta
# --------------------------------------------------------------------------


def four_point_delta(D, exhaustive_max: int = 40, samples: int = 100_000, seed: int = 0) -> float:
    """max over quadruples of min((x|y)_w, (y|z)_w) - (x|z)_w."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("distance matrix must be square")
    scale = max(1.0, float(np.max(np.abs(D)))) if D.size else 1.0
    if not np.allclose(D, D.T, rtol=0, atol=1e-9 * scale):
        raise InputError("distance matrix must be symmetric")
    if np.any(D < 0) or np.any(np.abs(np.diag(D)) > 1e-12 * scale):
        raise InputError("distance matrix must be nonnegative with zero diagonal")
    n = len(D)
    if n < 2:
        return 0.0
    best = 0.0
    if n <= exhaustive_max:
        for w in range(n):
            G = 0.5 * (D[:, w][:, None] + D[w, :][None, :] - D)
            # M[x, z] = max over y of min(G[x, y], G[y, z])
            M = np.max(np.minimum(G[:, :, None], G[None, :, :]), axis=1)
            best = max(best, float(np.max(M - G)))
        return best
    rng = np.random.default_rng(seed)
    Q = rng.integers(0, n, (samples, 4))
    w, x, y, z = Q.T

    def gp(a, b):
        return 0.5 * (D[a, w] + D[b, w] - D[a, b])

    return max(0.0, float(np.max(np.minimum(gp(x, y), gp(y, z)) - gp(x, z))))


def hilbert_distance_matrix(body: ConvexBody, P: np.ndarray) -> np.ndarray:
    """Pairwise Hilbert distances of interior points, vectorized over pairs."""
    if body.is_complex:
        raise PreconditionError("the Hilbert distance is defined here for real bodies only")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not np.all(body.inside(P)):
        raise PreconditionError("all sample points must be interior")
    n = len(P)
    I, J = np.triu_indices(n, 1)
    U = P[J] - P[I]
    L = np.linalg.norm(U, axis=1)
    D = np.zeros((n, n))
    moving = L > 0
    U = U[moving] / L[moving, None]
    Pi = P[I][moving]
    tb = body.hits(Pi, U)
    ta = body.hits(Pi, -U)
    Lm = L[moving]
    vals = 0.5 * np.log((ta + Lm) * tb / (ta * (tb - Lm)))
    D[I[moving], J[moving]] = vals
    D[J[moving], I[moving]] = vals
    return D


def hilbert_distances_from(body: ConvexBody, p: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Hilbert distances from one interior point to each row of X."""
    U = X - p
    L = np.linalg.norm(U, axis=1)
    out = np.zeros(len(X))
    moving = L > 0
    U = U[moving] / L[moving, None]
    P = np.broadcast_to(p, U.shape)
    tb, ta = body.hits(P, U), body.hits(P, -U)
    Lm = L[moving]
    out[moving] = 0.5 * np.log((ta + Lm) * tb / (ta * (tb - Lm)))
    return out


def depth_candidates(body: ConvexBody, depth: float) -> np.ndarray:
    """Interior points of a tensor grid refined geometrically toward the bounding box down to the given depth."""
    levels = int(round(-math.log2(depth)))
    c = 1.0 - 2.0 ** (-np.arange(0, 2 * levels + 1) / 2.0)
    c = np.unique(np.concatenate([-c, [0.0], c]))
    p0 = body.base_point
    n = body.ambient_dim
    lo = np.array([p0[i] + body.support(-np.eye(n)[i]) for i in range(n)])
    hi = np.array([body.support(np.eye(n)[i]) - p0[i] for i in range(n)])
    G = np.stack(np.meshgrid(*[c] * n, indexing="ij"), axis=-1).reshape(-1, n)
    X = p0 + np.where(G >= 0, G * hi, G * lo)
    return X[body.inside(X)]


def depth_samples(body: ConvexBody, depth: float, n_points: int = 30) -> np.ndarray:
    """Farthest-point sample, in the Hilbert metric, of the depth candidates, seeded at the base point."""
    X = depth_candidates(body, depth)
    chosen = [int(np.argmin(np.linalg.norm(X - body.base_point, axis=1)))]
    nearest = np.full(len(X), np.inf)
    for _ in range(min(n_points, len(X)) - 1):
        nearest = np.minimum(nearest, hilbert_distances_from(body, X[chosen[-1]], X))
        chosen.append(int(np.argmax(nearest)))
    return X[chosen]


def hilbert_depth_delta(body: ConvexBody, depths=(2.0 ** -6, 2.0 ** -8, 2.0 ** -10), n_points: int = 30,
                        seed: int = 0) -> list[dict]:
    """Four-point delta of the Hilbert metric on depth-sampled points, one value per depth."""
    if body.is_complex or not body.bounded:
        raise PreconditionError("the Hilbert depth protocol needs a bounded real body")
    out = []
    for depth in depths:
        P = depth_samples(body, depth, n_points)
        out.append({"depth": depth, "n_points": len(P),
                    "delta": four_point_delta(hilbert_distance_matrix(body, P), seed=seed)})
    return out


# --------------------------------------------------------------------------
# Witness rectangles
# --------------------------------------------------------------------------


@dataclass
class WitnessRectangle:
    a: float
    b: float
    n: float
    corners: dict
    probe: np.ndarray
    gap: float
    side_gaps: dict
    clipped: bool

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "n": self.n, "corners": {k: v.tolist() for k, v in self.corners.items()},
                "probe": self.probe.tolist(), "gap": self.gap, "side_gaps": self.side_gaps, "clipped": self.clipped}


def nonhyperbolicity_witness(body: ConvexBody, k: int, x, V, a: float = 1.0, b: float = 3.0, n: float = 8.0,
                             side_samples: int = 200, count: int | None = None) -> WitnessRectangle:
    """Quasi-geodesic rectangle on a flat (or forced) direction and the measured slimness gap at its probe."""
    if n <= 2:
        raise PreconditionError("the construction needs n > 2 (at n = 2 the corner p_n collapses onto x_a)")
    if not b > a:
        raise PreconditionError("need b > a")
    x = _point(body, x)
    F = _frame_columns(body, V)
    if F.shape[1] != (2 * k if body.is_complex else k):
        raise InputError("frame does not have k columns over the field")
    qn = quasi_normal_at(body, x)
    r = qn.r

    def along(t):
        return x + r * math.exp(-t) * qn.n

    xa, xb = along(a), along(b)
    ha, w = plane_slice_distance(body, xa, F, count)
    w = w / np.linalg.norm(w)
    y = xa + ha * w
    shift = (1 - 2 / n) * (y - xa)
    pa = xa + shift
    pb = xb + shift
    clipped = False
    if not body.inside(pb[None])[0]:
        hb = float(body.hits(xb[None], w[None])[0])
        pb = xb + (1 - 2 / n) * hb * w
        clipped = True
    if np.linalg.norm(pa - xa) < 1e-12 * max(1.0, body.diameter):
        raise PreconditionError("the flat direction collapses: y_n coincides with x_a")
    probe = y + math.sqrt(2 / n) * (xa - y)
    s = np.linspace(0.0, 1.0, side_samples)[:, None]
    sides = {"normal": xa + s * (xb - xa), "far": xb + s * (pb - xb), "top": pb + s * (pa - pb)}
    family = supporting_family(body, np.vstack([probe, xa, xb, pa, pb]))
    extra = np.array(body.normals(x))
    family = (np.vstack([family[0], extra]), np.concatenate([family[1], [body.support(v) for v in extra]]))
    side_gaps = {}
    for name, S in sides.items():
        lb, _ = lower_bound_pairs(body, np.repeat(probe[None], len(S), axis=0), S, family)
        side_gaps[name] = float(np.min(lb))
    return WitnessRectangle(a, b, n, {"x_a": xa, "x_b": xb, "p": pa, "p_prime": pb, "y": y}, probe,
                            min(side_gaps.values()), side_gaps, clipped)


def coupled_n(a: float, b: float) -> float:
    """Corner scale tied to the run length so that the probe separation grows with b - a."""
    return 2.0 * math.exp(b - a)
