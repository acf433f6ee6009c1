"""The k-quasi-hyperbolic infinitesimal metric and its diagnostics.

delta_k(p; v) is the best boundary distance over K-subspaces V of K-dimension k
that contain v, where each V is scored by the nearest boundary point of the
affine slice p + V.  It is a max of a min, and neither level is convex, so the
outer maximization is a seeded multi-start ascent over frames.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import qmc

from .domains import (GOLDEN, ConvexBody, ScalarField, _interior, _min_hit_in_span, _unit, apply_j,
                      boundary_points, line_distances, min_hit_batch, to_complex, to_real)
from .errors import InputError, PreconditionError

TOL_OPT = 1e-6


@dataclass(frozen=True)
class Frame:
    """Orthonormal real columns spanning a K-subspace; the first column is the prescribed direction."""

    columns: np.ndarray
    field: ScalarField = ScalarField.REAL

    def __post_init__(self):
        F = np.array(self.columns, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        m = F.shape[1]
        if not np.allclose(F.T @ F, np.eye(m), atol=1e-10):
            raise PreconditionError("frame columns are not orthonormal")
        if self.field is ScalarField.COMPLEX:
            if m % 2:
                raise PreconditionError("complex frames need an even number of real columns")
            JF = apply_j(F.T).T
            resid = JF - F @ (F.T @ JF)
            if np.max(np.abs(resid)) > 1e-8:
                raise PreconditionError("complex frame span is not J-invariant")
        F.setflags(write=False)
        object.__setattr__(self, "columns", F)

    @property
    def k(self) -> int:
        m = self.columns.shape[1]
        return m // 2 if self.field is ScalarField.COMPLEX else m

    @classmethod
    def from_vectors(cls, vecs: np.ndarray, field: ScalarField) -> Frame:
        """Build from K-orthonormal columns given in K^d (complex dtype for complex fields)."""
        vecs = np.asarray(vecs)
        if field is ScalarField.REAL:
            return cls(np.real(vecs).astype(float), field)
        cols = []
        for j in range(vecs.shape[1]):
            cols.append(to_real(vecs[:, j]))
            cols.append(to_real(1j * vecs[:, j]))
        return cls(np.column_stack(cols), field)

    def to_json(self) -> list:
        return self.columns.T.tolist()


@dataclass(frozen=True)
class MetricValue:
    value: float
    delta: float
    frame: Frame | None
    bracket: tuple[float, float]
    restart_deltas: tuple[float, ...] = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {"value": self.value, "delta": _json_float(self.delta),
                "frame": None if self.frame is None else self.frame.to_json(),
                "bracket": [self.bracket[0], self.bracket[1]]}


@dataclass(frozen=True)
class QuasiNormal:
    x: np.ndarray
    n: np.ndarray
    r: float
    delta: float


def _json_float(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# --------------------------------------------------------------------------
# delta_k
# --------------------------------------------------------------------------


def _canonical(body: ConvexBody, v: np.ndarray) -> np.ndarray:
    """Unit vector in K^d spanning the same K-line as v, with a fixed phase."""
    if body.is_complex:
        z = to_complex(v)
        z = z / np.linalg.norm(z)
        i = int(np.argmax(np.abs(z) > 1e-12 * np.max(np.abs(z))))
        return z * np.conj(z[i]) / abs(z[i])
    u = np.asarray(v, dtype=float) / np.linalg.norm(v)
    i = int(np.argmax(np.abs(u) > 1e-12 * np.max(np.abs(u))))
    return u if u[i] > 0 else -u


def _real_columns(vecs: np.ndarray, cplx: bool) -> np.ndarray:
    if not cplx:
        return np.real(vecs)
    cols = []
    for j in range(vecs.shape[1]):
        cols.append(to_real(vecs[:, j]))
        cols.append(to_real(1j * vecs[:, j]))
    return np.column_stack(cols)


def _orthonormal(M: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(M)
    return Q * np.where(np.diag(R).real < 0, -1.0, 1.0)


def _start_frames(body: ConvexBody, p: np.ndarray, u: np.ndarray, B: np.ndarray, k: int,
                  restarts: int, seed: int) -> list[np.ndarray]:
    d = B.shape[0]
    starts = []
    cplx = body.is_complex
    eye = np.eye(d, dtype=complex if cplx else float)
    # coordinate frames: axes projected into the complement of u
    proj = B.conj().T @ eye
    good = [i for i in range(d) if np.linalg.norm(proj[:, i]) > 1e-6]
    for combo in itertools.islice(itertools.combinations(good, k - 1), 32):
        M = proj[:, list(combo)]
        if np.linalg.matrix_rank(M, tol=1e-8) == k - 1:
            starts.append(_orthonormal(M))
    # frame orthogonal to the quasi-normal through p
    off = p - body.base_point
    if np.linalg.norm(off) > 1e-12 * max(1.0, body.diameter):
        x = boundary_points(body, (off / np.linalg.norm(off))[None])[0]
        nrm = body.base_point - x
        nz = to_complex(nrm) if cplx else nrm
        nz = B.conj().T @ (nz / np.linalg.norm(nz))
        if np.linalg.norm(nz) > 1e-9:
            perp = null_space(nz.conj()[None])
            if perp.shape[1] >= k - 1:
                starts.append(_orthonormal(perp[:, : k - 1]))
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        G = rng.standard_normal((B.shape[1], k - 1))
        if cplx:
            G = G + 1j * rng.standard_normal((B.shape[1], k - 1))
        starts.append(_orthonormal(G))
    return starts


def _delta_k_search(body: ConvexBody, p: np.ndarray, v: np.ndarray, k: int, restarts: int, seed: int,
                    tol_opt: float, count: int | None):
    """Returns (best delta, best frame, per-restart optima)."""
    d = body.dim
    u = _canonical(body, v)
    cplx = body.is_complex
    if k == 1:
        val = float(line_distances(body, p[None], v[None])[0])
        return val, Frame.from_vectors(u[:, None], body.field), [val]
    B = null_space(u.conj()[None])
    if k == d:
        val = float(body.bdist(p[None])[0])
        return val, Frame.from_vectors(np.column_stack([u, B]), body.field), [val]
    m = 2 * k if cplx else k
    count = count or 256 * m

    def evaluate(Qs: list[np.ndarray]) -> np.ndarray:
        Fs = np.stack([_real_columns(np.column_stack([u, B @ Q]), cplx) for Q in Qs])
        return min_hit_batch(body, p, Fs, count)[0]

    starts = _start_frames(body, p, u, B, k, restarts, seed)
    if not cplx and d == 3:
        # k = 2 in R^3: the frames form a circle, so scan it and polish the best angle
        def at(t: float) -> np.ndarray:
            return np.array([[math.cos(t)], [math.sin(t)]])

        phis = np.concatenate([np.pi * np.arange(64) / 64,
                               [math.atan2(Q[1, 0], Q[0, 0]) % np.pi for Q in starts[: len(starts) - restarts]]])
        vals = evaluate([at(t) for t in phis])
        i = int(np.argmax(vals))
        best_t, best_v = float(phis[i]), float(vals[i])
        if math.isfinite(best_v):
            a, b = best_t - np.pi / 64, best_t + np.pi / 64
            x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
            f1, f2 = evaluate([at(x1), at(x2)])
            while b - a > 1e-8:
                if f1 > f2:
                    b, x2, f2 = x2, x1, f1
                    x1 = b - GOLDEN * (b - a)
                    f1 = evaluate([at(x1)])[0]
                else:
                    a, x1, f1 = x1, x2, f2
                    x2 = a + GOLDEN * (b - a)
                    f2 = evaluate([at(x2)])[0]
            for t, fv in ((x1, f1), (x2, f2)):
                if fv > best_v:
                    best_t, best_v = t, float(fv)
        frame = Frame.from_vectors(np.column_stack([u, B @ at(best_t)]), body.field)
        return best_v, frame, [float(x) for x in vals]

    Qs = list(starts)
    vals = evaluate(Qs)
    theta = np.full(len(Qs), 0.4)
    active = np.isfinite(vals)
    phases = (1.0, 1j) if cplx else (1.0,)
    while np.any(active):
        moves, owners = [], []
        for i in np.nonzero(active)[0]:
            Q = Qs[i]
            C = null_space(Q.conj().T)
            for j in range(Q.shape[1]):
                for l in range(C.shape[1]):
                    for ph in phases:
                        for sgn in (1.0, -1.0):
                            Q2 = Q.copy()
                            Q2[:, j] = math.cos(theta[i]) * Q[:, j] + sgn * math.sin(theta[i]) * ph * C[:, l]
                            moves.append(Q2)
                            owners.append(i)
        mv = evaluate(moves)
        owners = np.array(owners)
        for i in np.nonzero(active)[0]:
            sel = np.nonzero(owners == i)[0]
            j = sel[int(np.argmax(mv[sel]))]
            if mv[j] > vals[i] * (1 + tol_opt):
                Qs[i], vals[i] = moves[j], mv[j]
            else:
                theta[i] *= 0.5
                active[i] = theta[i] > 1e-4
    i = int(np.argmax(vals))
    return float(vals[i]), Frame.from_vectors(np.column_stack([u, B @ Qs[i]]), body.field), [float(x) for x in vals]


def _check_k(body: ConvexBody, k: int):
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= body.dim:
        raise PreconditionError(f"k must lie in 1..{body.dim}, got {k}")


def delta_k(body: ConvexBody, p, v, k: int, *, restarts: int = 32, seed: int = 0, tol_opt: float = TOL_OPT,
            count: int | None = None) -> tuple[float, Frame]:
    """Best slice distance over k-dimensional K-subspaces containing v, with the achieving frame."""
    p = _interior(body, p)
    v = np.asarray(v, dtype=float)
    if v.shape != p.shape:
        raise InputError("direction and point dimensions differ")
    _unit(v)
    _check_k(body, k)
    val, frame, _ = _delta_k_search(body, p, v, k, restarts, seed, tol_opt, count)
    return val, frame


def qk_norm(body: ConvexBody, p, v, k: int, *, frame: Frame | None = None, restarts: int = 32, seed: int = 0,
            tol_opt: float = TOL_OPT, count: int | None = None) -> MetricValue:
    p = _interior(body, p)
    v = np.asarray(v, dtype=float)
    if v.shape != p.shape:
        raise InputError("direction and point dimensions differ")
    _check_k(body, k)
    nv = float(np.linalg.norm(v))
    if nv == 0:
        return MetricValue(0.0, math.inf, None, (0.0, 0.0))
    if frame is not None:
        F = frame.columns
        delta = _min_hit_in_span(body, p, F, count or 256 * F.shape[1])[0]
        q = nv / delta
        return MetricValue(q, delta, frame, (q, q), (delta,))
    delta, fr, optima = _delta_k_search(body, p, v, k, restarts, seed, tol_opt, count)
    q = nv / delta
    worst = min(optima) if optima else delta
    upper = nv / worst if worst > 0 else math.inf
    return MetricValue(q, delta, fr, (q / (1 + tol_opt), max(upper, q)), tuple(optima))


def q_values(body: ConvexBody, P: np.ndarray, V: np.ndarray, k: int, **opts) -> np.ndarray:
    """q^(k)(P_i; V_i) for many rows.  Fast paths for k = 1 and k = d."""
    P = np.atleast_2d(P)
    V = np.atleast_2d(V)
    nv = np.linalg.norm(V, axis=1)
    out = np.zeros(len(P))
    nz = nv > 0
    if not np.any(nz):
        return out
    if k == 1:
        out[nz] = nv[nz] / line_distances(body, P[nz], V[nz])
    elif k == body.dim:
        out[nz] = nv[nz] / body.bdist(P[nz])
    else:
        for i in np.nonzero(nz)[0]:
            val, _, _ = _delta_k_search(body, P[i], V[i], k, opts.get("restarts", 8), opts.get("seed", 0),
                                        opts.get("tol_opt", TOL_OPT), opts.get("count"))
            out[i] = nv[i] / val
    return out


# --------------------------------------------------------------------------
# Minimal metric closed forms
# --------------------------------------------------------------------------


def minimal_metric_halfspace(p, v) -> float:
    """Minimal metric of {x_1 > 0}: |v_1| / (2 p_1)."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if not p[0] > 0:
        raise PreconditionError("the half-space formula needs p_1 > 0")
    return abs(float(v[0])) / (2.0 * float(p[0]))


def minimal_sandwich(body: ConvexBody, p, v, **opts) -> tuple[float, float]:
    """(q2/2, q2): the only minimal-metric bounds available on a general convex body."""
    if body.is_complex or body.dim < 3:
        raise PreconditionError("the sandwich needs a real body of dimension at least 3")
    q2 = qk_norm(body, p, v, 2, **opts).value
    return 0.5 * q2, q2


# --------------------------------------------------------------------------
# Quasi-normal decompositions
# --------------------------------------------------------------------------


def quasi_normal_at(body: ConvexBody, x) -> QuasiNormal:
    x = np.asarray(x, dtype=float)
    if x.shape != (body.ambient_dim,):
        raise InputError("boundary point has the wrong dimension")
    off = x - body.base_point
    r = float(np.linalg.norm(off))
    if r == 0:
        raise PreconditionError("the base point is not a boundary point")
    z = boundary_points(body, (off / r)[None])[0]
    if np.linalg.norm(z - x) > 1e-8 * max(1.0, body.diameter):
        raise PreconditionError(f"point {x.tolist()} is not on the boundary")
    return QuasiNormal(x, -off / r, r, body.base_depth)


@dataclass(frozen=True)
class DecompositionReport:
    delta_n: float
    delta_v0: float
    delta_v: float
    q_sn: float
    q_v0: float
    q_v: float
    harmonic: float
    distance_ratio: float
    min_ratio: float
    split_ratio: float

    def to_json(self) -> dict:
        return {k: _json_float(getattr(self, k)) for k in self.__dataclass_fields__}


def _tangent_ok(body: ConvexBody, x: np.ndarray, v0: np.ndarray, outward: np.ndarray) -> bool:
    nv = np.linalg.norm(v0)
    if nv == 0:
        return True
    scale = max(1.0, body.diameter)
    taus = np.geomspace(1e-6 * scale, 2 * scale, 120) / nv
    taus = np.concatenate([taus, -taus])
    pts = x + taus[:, None] * v0 + 1e-8 * scale * outward
    return not np.any(body.inside(pts))


def decomposition_audit(body: ConvexBody, x, qn: QuasiNormal, t: float, s: float, v0, k: int = 1,
                        **opts) -> DecompositionReport:
    """All six quantities behind the normal/tangential split of v = s n + v0 at p = x + t n."""
    x = np.asarray(x, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not 0 < t <= qn.r * (1 + 1e-12):
        raise PreconditionError("t must lie in (0, r]")
    p = x + t * qn.n
    _interior(body, p)
    if not _tangent_ok(body, x, v0, -qn.n):
        raise PreconditionError("the line x + R v0 meets the body")
    v = s * qn.n + v0
    if np.linalg.norm(v) == 0:
        raise PreconditionError("v = s n + v0 must be nonzero")
    dn, dv = (float(line_distances(body, p[None], w[None])[0]) for w in (qn.n, v))
    dv0 = float(line_distances(body, p[None], v0[None])[0]) if np.linalg.norm(v0) > 0 else math.inf
    nv, nv0 = float(np.linalg.norm(v)), float(np.linalg.norm(v0))
    harmonic = nv / (abs(s) / dn + (nv0 / dv0 if nv0 > 0 else 0.0))
    mins = []
    if s != 0:
        mins.append(nv / abs(s) * dn)
    if nv0 > 0:
        mins.append(nv / nv0 * dv0)
    qs = [qk_norm(body, p, w, k, **opts).value if np.linalg.norm(w) > 0 else 0.0
          for w in (s * qn.n, v0, v)]
    return DecompositionReport(dn, dv0, dv, qs[0], qs[1], qs[2], harmonic, dv / harmonic,
                               dv / min(mins), (qs[0] + qs[1]) / qs[2])


def _decomposition_from_unit(body: ConvexBody, row: np.ndarray):
    # maps a point of the unit cube to (x, quasi-normal, t, s, v0); None when v0 degenerates
    n = body.ambient_dim
    row = np.clip(row, 1e-12, 1 - 1e-12)
    u = ndtri(row[:n])
    w = ndtri(row[n:2 * n])
    lv, ls, sign, lt = row[2 * n:]
    u /= np.linalg.norm(u)
    x = boundary_points(body, u[None])[0]
    qn = quasi_normal_at(body, x)
    nu = body.normals(x)[0]
    w = w - (w @ nu) * nu
    if np.linalg.norm(w) < 1e-9:
        return None
    v0 = w / np.linalg.norm(w) * 10.0 ** (2 * lv - 1)
    s = (1.0 if sign < 0.5 else -1.0) * 10.0 ** (2 * ls - 1)
    t = qn.r * 10.0 ** (-3 * lt)
    return x, qn, t, s, v0


def _sobol_rows(body: ConvexBody, n_samples: int, seed: int) -> list[np.ndarray]:
    n = body.ambient_dim
    sobol = qmc.Sobol(2 * n + 4, scramble=True, seed=seed)
    m = int(math.ceil(math.log2(max(2, n_samples))))
    rows: list = []
    while len(rows) < n_samples:
        for row in sobol.random_base2(m):
            if len(rows) < n_samples and _decomposition_from_unit(body, row) is not None:
                rows.append(row)
    return rows


def sample_decompositions(body: ConvexBody, n_samples: int, seed: int = 0):
    """Seeded (x, quasi-normal, t, s, v0) samples with v0 tangent to a supporting hyperplane at x.

    Draws come from a scrambled Sobol sequence over log-uniform scales for t, |s| and |v0|.
    """
    return [_decomposition_from_unit(body, row) for row in _sobol_rows(body, n_samples, seed)]


def decomposition_sweep(body: ConvexBody, n_samples: int = 200, k: int = 1, seed: int = 0, refine: int = 3,
                        refine_evals: int = 60, **opts) -> dict:
    """Empirical two-sided constants of the distance decomposition and the metric splitting.

    The `refine` most extreme samples of each ratio are pushed further by a local Nelder-Mead search in
    the sampling parameters, so the reported constants approach the supremum rather than a sample maximum.
    """
    rows = _sobol_rows(body, n_samples, seed)
    reports = [decomposition_audit(body, *_decomposition_from_unit(body, r), k, **opts) for r in rows]

    def ratio(row, attr):
        sample = _decomposition_from_unit(body, row)
        if sample is None:
            return None
        try:
            return getattr(decomposition_audit(body, *sample, k, **opts), attr)
        except PreconditionError:
            return None

    extremes = {}
    for attr in ("distance_ratio", "split_ratio"):
        vals = np.array([getattr(r, attr) for r in reports])
        hi, lo = float(vals.max()), float(vals.min())
        for sgn, order in ((1.0, np.argsort(-vals)), (-1.0, np.argsort(vals))):
            for i in order[:refine]:
                def f(z, sgn=sgn, attr=attr):
                    v = ratio(z, attr)
                    return 0.0 if v is None or not math.isfinite(v) or v <= 0 else -sgn * math.log(v)

                res = minimize(f, rows[i], method="Nelder-Mead",
                               options={"maxfev": refine_evals, "initial_simplex": _simplex(rows[i])})
                v = ratio(res.x, attr)
                if v is not None and math.isfinite(v) and v > 0:
                    hi, lo = max(hi, v), min(lo, v)
        extremes[attr] = (lo, hi)
    (dlo, dhi), (slo, shi) = extremes["distance_ratio"], extremes["split_ratio"]
    mins = np.array([r.min_ratio for r in reports])
    return {
        "n": len(reports), "k": k, "seed": seed,
        "distance_ratio_min": dlo, "distance_ratio_max": dhi,
        "min_ratio_max": float(mins.max()),
        "split_ratio_min": slo, "split_ratio_max": shi,
        "C_distance": float(max(dhi, 1.0 / dlo)),
        "C_split": float(max(shi, 1.0 / slo)),
    }


def _simplex(z: np.ndarray, step: float = 0.05) -> np.ndarray:
    S = np.tile(z, (len(z) + 1, 1))
    for j in range(len(z)):
        S[j + 1, j] += step if z[j] + step < 1 else -step
    return S
