"""Linear isoperimetric machinery on M x (0,1] with M a circle of circumference 1.

Points are (x, t) with x an unwrapped coordinate on the circle and t the height.
Star curves are cyclic words of vertical pieces between consecutive levels
t = e^{-k T0} and horizontal pieces at a level; reduce_and_fill fills them by
case-by-case surgery and emits a replayable certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import CheckFailed, InputError, PreconditionError

LEVEL_TOL = 1e-9


def _builtin_norm(x, t, v, w):
    return (np.abs(v) + np.abs(w)) / t


@dataclass(frozen=True)
class ModelMetric:
    """Norm rule ||(v, w)||_(x,t) with the constants of the expansion conditions."""

    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    lam: float = 1.0
    norm: Callable = _builtin_norm
    name: str = "builtin"

    def __post_init__(self):
        if min(self.C1, self.C2, self.C3, self.lam) <= 0:
            raise InputError("metric constants must be positive")

    def to_json(self) -> dict:
        return {"C1": self.C1, "C2": self.C2, "C3": self.C3, "lambda": self.lam, "name": self.name}


def builtin_metric() -> ModelMetric:
    return ModelMetric()


def check_conditions(metric: ModelMetric, n: int = 1000, seed: int = 0) -> dict:
    """Worst slack of conditions (a), (b), (c) on random samples; negative means violated."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    t = np.exp(-rng.uniform(0, 10, n))
    s = t * np.exp(-rng.uniform(0, 5, n))
    v = rng.standard_normal(n)
    w = rng.standard_normal(n)
    N = metric.norm
    vert = N(x, t, 0 * w, w)
    a_low = vert - np.abs(w) / t / metric.C1
    a_high = metric.C1 * np.abs(w) / t - vert
    b = metric.C2 * N(x, t, v, w) - (N(x, t, v, 0 * w) + vert)
    c = N(x, s, v, 0 * v) - metric.C3 * (t / s) ** metric.lam * N(x, t, v, 0 * v)
    scale = lambda arr, ref: arr / np.maximum(1.0, np.abs(ref))
    return {"a_lower": float(np.min(scale(a_low, vert))), "a_upper": float(np.min(scale(a_high, vert))),
            "b": float(np.min(scale(b, vert))), "c": float(np.min(scale(c, N(x, s, v, 0 * v))))}


# --------------------------------------------------------------------------
# Lengths and distances
# --------------------------------------------------------------------------


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def curve_length(metric: ModelMetric, P) -> float:
    """Integrated length of a polyline in (x, t) coordinates."""
    P = np.asarray(P, dtype=float)
    if len(P) < 2:
        return 0.0
    if np.any(P[:, 1] <= 0) or np.any(P[:, 1] > 1 + LEVEL_TOL):
        raise PreconditionError("curve exits M x (0,1]")
    A, B = P[:-1], P[1:]
    # graded pieces: the t-ratio across each piece stays below 1.02
    ratio = np.abs(np.log(B[:, 1] / A[:, 1]))
    pieces = np.maximum(1, np.ceil(ratio / math.log(1.02))).astype(int)
    seg = np.repeat(np.arange(len(A)), pieces)
    k = np.concatenate([np.arange(m) for m in pieces])
    m = pieces[seg]
    u0, u1 = k / m, (k + 1) / m
    uu = 0.5 * (u0 + u1)[:, None] + 0.5 * (u1 - u0)[:, None] * _GL_X[None]
    D = B[seg] - A[seg]
    X = A[seg][:, 0:1] + uu * D[:, 0:1]
    T = A[seg][:, 1:2] + uu * D[:, 1:2]
    f = metric.norm(X, T, np.broadcast_to(D[:, 0:1], X.shape), np.broadcast_to(D[:, 1:2], X.shape))
    return float(np.sum(0.5 * (u1 - u0) * (f @ _GL_W)))


def _wrap(dx: float) -> float:
    return (dx + 0.5) % 1.0 - 0.5


def model_distance(metric: ModelMetric, a, b, grid: int = 64, refine: bool = True) -> tuple[float, float]:
    """(lower, upper) bounds for the distance between (x, t) and (y, s)."""
    (x, t), (y, s) = a, b
    if not (0 < t <= 1 and 0 < s <= 1):
        raise PreconditionError("heights must lie in (0, 1]")
    lower = abs(math.log(s / t)) / (metric.C1 * metric.C2)
    dx = _wrap(y - x)
    if dx == 0 and s == t:
        return 0.0, 0.0
    lo = min(s, t)

    def via(tau: float) -> float:
        # up (or down) to height tau, across, then to the target height
        return curve_length(metric, [[x, t], [x, tau], [x + dx, tau], [x + dx, s]])

    taus = np.exp(np.linspace(math.log(lo), 0.0, grid))
    vals = [via(u) for u in taus]
    i = int(np.argmin(vals))
    best = vals[i]
    if refine and 0 < i < grid - 1:
        g = (math.sqrt(5) - 1) / 2
        la, lb = math.log(taus[i - 1]), math.log(taus[i + 1])
        c1, c2 = lb - g * (lb - la), la + g * (lb - la)
        f1, f2 = via(math.exp(c1)), via(math.exp(c2))
        while lb - la > 1e-10:
            if f1 < f2:
                lb, c2, f2 = c2, c1, f1
                c1 = lb - g * (lb - la)
                f1 = via(math.exp(c1))
            else:
                la, c1, f1 = c1, c2, f2
                c2 = la + g * (lb - la)
                f2 = via(math.exp(c2))
        best = min(best, f1, f2)
    best = min(best, curve_length(metric, [[x, t], [x + dx, s]]))
    return lower, max(best, lower)


# --------------------------------------------------------------------------
# Constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Constants:
    T0: float
    L: float
    R: float
    diam_num: float

    def to_json(self) -> dict:
        return {"T0": self.T0, "L": self.L, "R": self.R, "diam_num": self.diam_num}


@lru_cache(maxsize=32)
def derive_constants(metric: ModelMetric, net: int = 64, margin: float = 0.1) -> Constants:
    """T0 with C3 e^{lam T0} > 2 (plus a margin), L, and R including a numerical diameter bound."""
    T0 = max(math.log(2.0 / metric.C3) / metric.lam, 0.0) + margin
    L = max(metric.C1 * T0, metric.C2 / metric.C3)
    diam = band_diameter(metric, T0, net)
    R = max(2.0, 2 * metric.C1 * (metric.C1 * metric.C2 + T0), diam, 4.5 * L)
    return Constants(T0, L, R, diam)


def band_diameter(metric: ModelMetric, T0: float, net: int = 64) -> float:
    """Upper bound on diam(M x [e^{-T0}, 1]): max net distance plus twice the covering radius."""
    side = int(round(math.sqrt(net)))
    xs = np.arange(side) / side
    ts = np.exp(-np.linspace(0.0, T0, side))
    pts = [(x, t) for x in xs for t in ts]
    far = 0.0
    for i, p in enumerate(pts):
        for q in pts[i + 1:]:
            far = max(far, model_distance(metric, p, q, grid=16, refine=False)[1])
    half_x = 0.5 / side
    dlog = T0 / (side - 1) if side > 1 else T0
    cover = 0.0
    for t in np.exp(-np.linspace(0.0, T0, 4 * side)):
        up = curve_length(metric, [[0.0, t], [0.0, min(1.0, t * math.exp(0.5 * dlog))]])
        across = curve_length(metric, [[0.0, t], [half_x, t]])
        cover = max(cover, up + across)
    return far + 2 * cover


# --------------------------------------------------------------------------
# Star curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Vertical:
    x: float
    level: int
    dir: str

    def __post_init__(self):
        if self.dir not in ("up", "down"):
            raise InputError("vertical direction must be 'up' or 'down'")
        if self.level < 0:
            raise InputError("levels must be nonnegative")

    @property
    def start(self):
        return (self.x, self.level if self.dir == "down" else self.level + 1)

    @property
    def end(self):
        return (self.x, self.level + 1 if self.dir == "down" else self.level)

    @property
    def bottom(self) -> int:
        return self.level + 1

    def reversed(self) -> Vertical:
        return Vertical(self.x, self.level, "up" if self.dir == "down" else "down")

    def to_json(self) -> dict:
        return {"type": "V", "x": self.x, "level": self.level, "dir": self.dir}


@dataclass(frozen=True)
class Horizontal:
    level: int
    path: tuple

    def __post_init__(self):
        if self.level < 0:
            raise InputError("levels must be nonnegative")
        if len(self.path) < 2:
            raise InputError("a horizontal piece needs at least two x positions")
        object.__setattr__(self, "path", tuple(float(v) for v in self.path))

    @property
    def start(self):
        return (self.path[0], self.level)

    @property
    def end(self):
        return (self.path[-1], self.level)

    @property
    def bottom(self) -> int:
        return self.level

    def reversed(self) -> Horizontal:
        return Horizontal(self.level, self.path[::-1])

    def lifted(self, by: int) -> Horizontal:
        return Horizontal(self.level - by, self.path)

    def to_json(self) -> dict:
        return {"type": "H", "level": self.level, "path": list(self.path)}


Piece = Vertical | Horizontal


def piece_from_json(d: dict) -> Piece:
    kind = d.get("type")
    try:
        if kind == "V":
            return Vertical(float(d["x"]), int(d["level"]), str(d["dir"]))
        if kind == "H":
            return Horizontal(int(d["level"]), tuple(d["path"]))
    except KeyError as exc:
        raise InputError(f"star curve piece is missing key {exc.args[0]!r}") from None
    raise InputError(f"unknown star curve piece type {kind!r}")


def _same_point(p, q) -> bool:
    return p[1] == q[1] and abs(_wrap(p[0] - q[0])) <= LEVEL_TOL


class Lengths:
    """Integrated lengths of pieces for one metric and T0, memoized."""

    def __init__(self, metric: ModelMetric, T0: float):
        self.metric = metric
        self.T0 = T0
        self._piece = lru_cache(maxsize=None)(self._length)

    def height(self, level: int) -> float:
        return math.exp(-level * self.T0)

    def _length(self, piece: Piece) -> float:
        if isinstance(piece, Vertical):
            return curve_length(self.metric, [[piece.x, self.height(piece.level + 1)],
                                              [piece.x, self.height(piece.level)]])
        h = self.height(piece.level)
        return curve_length(self.metric, [[x, h] for x in piece.path])

    def __call__(self, piece: Piece) -> float:
        return self._piece(piece)

    def word(self, pieces) -> float:
        return float(sum(self(p) for p in pieces))


@dataclass
class StarCurve:
    pieces: list

    @property
    def N(self) -> int:
        return len(self.pieces)

    @property
    def depth(self) -> int:
        return max((p.bottom for p in self.pieces), default=0)

    def validate(self, lengths: Lengths, L: float) -> None:
        n = len(self.pieces)
        for i, p in enumerate(self.pieces):
            q = self.pieces[(i + 1) % n]
            if not _same_point(p.end, q.start):
                raise CheckFailed(f"pieces {i} and {(i + 1) % n} do not share an endpoint")
            if isinstance(p, Horizontal) and lengths(p) > L + 1e-9:
                raise CheckFailed(f"horizontal piece {i} is longer than L")

    def reversed(self) -> StarCurve:
        return StarCurve([p.reversed() for p in self.pieces[::-1]])

    def to_json(self) -> list:
        return [p.to_json() for p in self.pieces]

    @classmethod
    def from_json(cls, data) -> StarCurve:
        if not isinstance(data, list):
            raise InputError("a star curve is a JSON list of pieces")
        return cls([piece_from_json(d) for d in data])


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------


@dataclass
class NormalizationReport:
    length_in: float
    length_out: float
    N: int
    N_bound: float
    arcs: int
    already_star: bool

    def to_json(self) -> dict:
        return {"length_in": self.length_in, "length_out": self.length_out, "N": self.N, "N_bound": self.N_bound,
                "arcs": self.arcs, "already_star": self.already_star}


def _level_of(t: float, T0: float) -> int | None:
    h = -math.log(t) / T0
    k = round(h)
    return k if abs(h - k) <= 1e-9 * max(1.0, abs(h)) else None


def _as_star(P: np.ndarray, lengths: Lengths, L: float) -> StarCurve | None:
    # reads an H/V polyline at exact levels as a word, merging horizontal runs while they stay within L
    T0 = lengths.T0
    levels = [_level_of(t, T0) for t in P[:, 1]]
    if any(k is None for k in levels):
        return None
    pieces: list = []
    run: list = []
    run_level = None

    def flush():
        nonlocal run
        if len(run) >= 2:
            pieces.append(Horizontal(run_level, tuple(run)))
        run = []

    for i in range(len(P) - 1):
        (x0, _), (x1, _) = P[i], P[i + 1]
        k0, k1 = levels[i], levels[i + 1]
        if k0 == k1 and x0 != x1:
            if run and (run_level != k0 or lengths(Horizontal(k0, tuple(run) + (x1,))) > L + 1e-9):
                flush()
            if not run:
                run, run_level = [x0], k0
            run.append(x1)
        elif x0 == x1 and k0 != k1:
            flush()
            step = 1 if k1 > k0 else -1
            for k in range(k0, k1, step):
                pieces.append(Vertical(x0, min(k, k + step), "down" if step > 0 else "up"))
        elif x0 == x1 and k0 == k1:
            continue
        else:
            return None
    flush()
    return StarCurve(pieces)


def normalize_to_star(metric: ModelMetric, curve, constants: Constants) -> tuple[StarCurve, NormalizationReport]:
    """Closed polyline in (x, t) to a star curve with horizontals snapped to levels and vertical stacks."""
    P = np.asarray(curve, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 2:
        raise InputError("a curve is a list of (x, t) vertices")
    if np.any(P[:, 1] <= 0) or np.any(P[:, 1] > 1 + LEVEL_TOL):
        raise PreconditionError("curve exits M x (0,1]")
    closing = P[-1] - P[0]
    if abs(closing[1]) > LEVEL_TOL or abs(closing[0] - round(closing[0])) > LEVEL_TOL:
        raise PreconditionError("curve is not closed")
    T0, L = constants.T0, constants.L
    lengths = Lengths(metric, T0)
    total = curve_length(metric, P)
    bound = (1 + total) * (2 + 2 * metric.C1 * metric.C2 / T0)
    if total == 0:
        return StarCurve([]), NormalizationReport(0.0, 0.0, 0, bound, 0, True)
    star = _as_star(P, lengths, L)
    if star is not None:
        return star, NormalizationReport(total, lengths.word(star.pieces), star.N, bound, 0, True)
    n_arcs = int(math.floor(total)) + 1
    arcs = _equal_arcs(metric, P, n_arcs)
    hs = [int(math.floor(-math.log(float(np.max(A[:, 1]))) / T0 + 1e-12)) for A in arcs]
    pieces: list = []
    for i, A in enumerate(arcs):
        xs = A[:, 0]
        if np.any(np.diff(xs) != 0):
            keep = np.concatenate([[True], np.diff(xs) != 0])
            pieces.append(Horizontal(hs[i], tuple(xs[keep])))
        h_next = hs[(i + 1) % len(arcs)]
        x_end = float(A[-1, 0]) if i + 1 < len(arcs) else float(arcs[0][0, 0])
        step = 1 if h_next > hs[i] else -1
        for k in range(hs[i], h_next, step):
            pieces.append(Vertical(x_end, min(k, k + step), "down" if step > 0 else "up"))
    star = StarCurve(pieces)
    star.validate(lengths, L)
    out_len = lengths.word(pieces)
    if star.N > bound + 1e-9:
        raise CheckFailed(f"normalized word has N = {star.N} above the bound {bound}")
    return star, NormalizationReport(total, out_len, star.N, bound, n_arcs, False)


def _equal_arcs(metric: ModelMetric, P: np.ndarray, n_arcs: int) -> list[np.ndarray]:
    # split the polyline into n_arcs arcs of equal integrated length
    fine = [P[0]]
    for a, b in zip(P[:-1], P[1:]):
        m = max(1, int(math.ceil(abs(math.log(b[1] / a[1])) / math.log(1.02))), int(math.ceil(
            curve_length(metric, [a, b]) * 16)))
        for s in np.arange(1, m + 1) / m:
            fine.append(a + s * (b - a))
    F = np.array(fine)
    seg_len = np.array([curve_length(metric, F[i:i + 2]) for i in range(len(F) - 1)])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    arcs = []
    start_pt = F[0]
    start_idx = 0
    for j in range(1, n_arcs + 1):
        target = total * j / n_arcs
        if j == n_arcs:
            arcs.append(np.vstack([start_pt, F[start_idx + 1:]]))
            break
        i = int(np.searchsorted(cum, target) - 1)
        i = min(max(i, 0), len(F) - 2)
        a, b = F[i], F[i + 1]
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if cum[i] + curve_length(metric, [a, a + mid * (b - a)]) < target:
                lo = mid
            else:
                hi = mid
        cut = a + 0.5 * (lo + hi) * (b - a)
        arcs.append(np.vstack([start_pt, F[start_idx + 1:i + 1], cut]))
        start_pt, start_idx = cut, i
    return arcs


# --------------------------------------------------------------------------
# Surgery
# --------------------------------------------------------------------------


@dataclass
class Surgery:
    case: str
    rotation: int
    removed: list
    inserted: list
    regions: list
    triangles: int

    def to_json(self) -> dict:
        return {"case": self.case, "rotation": self.rotation, "removed": [p.to_json() for p in self.removed],
                "inserted": [p.to_json() for p in self.inserted], "region_diameters": self.regions,
                "triangles": self.triangles}


@dataclass
class FillingCertificate:
    triangles: int
    N: int
    R: float
    log: list = field(default_factory=list)
    base_diameter: float | None = None

    @property
    def max_diameter(self) -> float:
        ds = [d for s in self.log for d in s.regions]
        if self.base_diameter is not None:
            ds.append(self.base_diameter)
        return max(ds, default=0.0)

    def to_json(self) -> dict:
        return {"triangles": self.triangles, "N": self.N, "R": self.R, "base_diameter": self.base_diameter,
                "max_diameter": self.max_diameter, "log": [s.to_json() for s in self.log]}


def _loop_diameter(lengths: Lengths, *groups) -> float:
    # any two points of a closed loop are within half its length
    return 0.5 * sum(lengths.word(g) for g in groups)


def _find(word: list, pattern: Callable[[list], bool], width: int) -> int | None:
    n = len(word)
    for i in range(n):
        window = [word[(i + j) % n] for j in range(width)]
        if pattern(window):
            return i
    return None


def _is_v(p, level: int, direction: str) -> bool:
    return isinstance(p, Vertical) and p.level == level and p.dir == direction


def _is_h(p, level: int) -> bool:
    return isinstance(p, Horizontal) and p.level == level


def reduce_and_fill(metric: ModelMetric, star: StarCurve, constants: Constants) -> FillingCertificate:
    """Fill a star curve by surgery; every region diameter is certified at most R."""
    T0, L, R = constants.T0, constants.L, constants.R
    lengths = Lengths(metric, T0)
    star.validate(lengths, L)
    word = list(star.pieces)
    N0 = len(word)
    cert = FillingCertificate(0, N0, R)
    if N0 == 0:
        return cert
    for _ in range(2 * N0 + 1):
        n = len(word)
        h = max(p.bottom for p in word)
        if h <= 1 or n <= 3:
            diam = _loop_diameter(lengths, word)
            if h <= 1:
                diam = min(diam, constants.diam_num)
            if diam > R:
                raise CheckFailed(f"base region diameter {diam} exceeds R = {R}")
            cert.base_diameter = diam
            cert.triangles += 1
            break
        deepest_h = [p for p in word if _is_h(p, h)]
        if len(deepest_h) == n:
            # every piece is horizontal at the deepest level: lift two levels, merging runs of up to four
            if h < 2:
                raise CheckFailed("lifting two levels needs depth at least 2")
            groups = [word[i:i + 4] for i in range(0, n, 4)]
            inserted, regions = [], []
            for g in groups:
                lifted = Horizontal(h - 2, tuple(x for j, p in enumerate(g) for x in (p.path if j == 0 else p.path[1:])))
                if lengths(lifted) > L + 1e-9:
                    raise CheckFailed("merged lifted horizontal is longer than L")
                xs, xe = g[0].path[0], g[-1].path[-1]
                stack = [Vertical(xs, h - 2, "down"), Vertical(xs, h - 1, "down"),
                         Vertical(xe, h - 1, "up"), Vertical(xe, h - 2, "up")]
                regions.append(_loop_diameter(lengths, g, stack, [lifted]))
                inserted.append(lifted)
            step = Surgery("2", 0, word, inserted, regions, len(groups))
            new_word = inserted
        elif not deepest_h:
            i = _find(word, lambda w: _is_v(w[0], h - 1, "down") and _is_v(w[1], h - 1, "up")
                      and abs(_wrap(w[0].x - w[1].x)) <= LEVEL_TOL, 2)
            if i is None:
                raise CheckFailed("no cancelling vertical pair at the deepest level")
            rot = word[i:] + word[:i]
            step = Surgery("1", i, rot[:2], [], [_loop_diameter(lengths, rot[:2])], 1)
            new_word = rot[2:]
        else:
            i = _find(word, lambda w: _is_v(w[0], h - 1, "down") and _is_h(w[1], h) and _is_v(w[2], h - 1, "up"), 3)
            if i is not None:
                rot = word[i:] + word[:i]
                lifted = rot[1].lifted(1)
                step = Surgery("3a", i, rot[:3], [lifted], [_loop_diameter(lengths, rot[:3], [lifted])], 1)
                new_word = [lifted] + rot[3:]
            else:
                i = _find(word, lambda w: _is_v(w[0], h - 1, "down") and _is_h(w[1], h) and _is_h(w[2], h), 3)
                if i is None:
                    raise CheckFailed("no surgery pattern applies at the deepest level")
                rot = word[i:] + word[:i]
                v, h1, h2 = rot[:3]
                merged = Horizontal(h - 1, h1.path + h2.path[1:])
                if lengths(merged) > L + 1e-9:
                    raise CheckFailed("merged lifted horizontal is longer than L")
                new_v = Vertical(h2.path[-1], h - 1, "down")
                step = Surgery("3b", i, rot[:3], [merged, new_v],
                               [_loop_diameter(lengths, rot[:3], [merged, new_v])], 1)
                new_word = [merged, new_v] + rot[3:]
        for d in step.regions:
            if d > R:
                raise CheckFailed(f"case {step.case} region diameter {d} exceeds R = {R}")
        if not (len(new_word) < n):
            raise CheckFailed(f"case {step.case} did not shorten the word")
        cert.triangles += step.triangles
        cert.log.append(step)
        word = new_word
    else:
        raise CheckFailed("surgery did not terminate within 2N steps")
    if cert.triangles > N0:
        raise CheckFailed(f"{cert.triangles} triangles exceed N = {N0}")
    return cert


def replay(certificate: FillingCertificate, star: StarCurve) -> bool:
    """Re-walk the surgery log on the word level; every step must remove exactly the logged pieces."""
    word = list(star.pieces)
    for s in certificate.log:
        if s.case == "2":
            if word != s.removed:
                raise CheckFailed("case 2 step does not match the current word")
            word = list(s.inserted)
            continue
        rot = word[s.rotation:] + word[:s.rotation]
        m = len(s.removed)
        if rot[:m] != s.removed:
            raise CheckFailed(f"case {s.case} step does not match the current word")
        # the region boundary: removed pieces followed by the inserted pieces reversed must close up
        loop = list(s.removed) + [p.reversed() for p in s.inserted[::-1]]
        for a, b in zip(loop, loop[1:] + loop[:1]):
            if not _same_point(a.end, b.start):
                raise CheckFailed(f"case {s.case} region boundary is not closed")
        word = list(s.inserted) + rot[m:]
    if certificate.N and certificate.base_diameter is None:
        raise CheckFailed("certificate has no closing base case")
    return True


# --------------------------------------------------------------------------
# Random curves and audits
# --------------------------------------------------------------------------


def random_star_curve(constants: Constants, rng: np.random.Generator, max_N: int = 60,
                      max_level: int = 6, lengths: Lengths | None = None) -> StarCurve:
    """A random closed word: a walk of vertical and horizontal moves closed through level 0."""
    L, T0 = constants.L, constants.T0
    while True:
        x = float(rng.uniform(0, 1))
        start_x, k = x, int(rng.integers(0, max_level + 1))
        start_k = k
        pieces: list = []
        for _ in range(int(rng.integers(1, max_N))):
            move = rng.uniform()
            if move < 0.3 and k < max_level:
                pieces.append(Vertical(x, k, "down"))
                k += 1
            elif move < 0.6 and k > 0:
                pieces.append(Vertical(x, k - 1, "up"))
                k -= 1
            else:
                dx = float(rng.uniform(-1, 1)) * 0.99 * L * math.exp(-k * T0)
                pieces.append(Horizontal(k, (x, x + dx)))
                x += dx
        # close: rise to level 0, cross at most half the circle per piece, descend to the start level
        for j in range(k - 1, -1, -1):
            pieces.append(Vertical(x, j, "up"))
        gap = _wrap(start_x - x)
        while abs(gap) > 1e-15:
            stepx = math.copysign(min(abs(gap), 0.99 * L), gap)
            pieces.append(Horizontal(0, (x, x + stepx)))
            x += stepx
            gap = _wrap(start_x - x)
        for j in range(0, start_k):
            pieces.append(Vertical(x, j, "down"))
        # fix float drift so the word closes exactly at the start point
        if pieces and isinstance(pieces[-1], Vertical):
            pieces = [Vertical(start_x, p.level, p.dir) if isinstance(p, Vertical) and p.x == x else p
                      for p in pieces]
        if 0 < len(pieces) <= max_N:
            star = StarCurve(pieces)
            try:
                star.validate(lengths or Lengths(ModelMetric(), T0), L)
            except CheckFailed:
                continue
            return star


def random_closed_curve(rng: np.random.Generator, target_length: float, metric: ModelMetric,
                        vertices: int = 12) -> np.ndarray:
    """A closed polyline in (x, t) whose integrated length is close to target_length."""
    u = rng.uniform(0.0, 1.0, vertices)
    depth = rng.uniform(0.5, 4.0, vertices)
    P = np.column_stack([np.cumsum(rng.uniform(-0.3, 0.3, vertices)) + u[0], np.exp(-depth)])
    P = np.vstack([P, P[:1]])
    base = curve_length(metric, P)
    # stretch depths to hit the target (log-depth scales the length roughly linearly)
    lo, hi = 0.0, 20.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        Q = P.copy()
        Q[:, 1] = P[:, 1] ** mid if mid > 0 else P[:, 1]
        if curve_length(metric, Q) < target_length:
            lo = mid
        else:
            hi = mid
    Q = P.copy()
    Q[:, 1] = P[:, 1] ** hi
    return Q if curve_length(metric, Q) >= min(target_length, base) else P


@dataclass
class IsoperimetricAudit:
    A: float
    B: float
    correlation: float
    records: list

    def to_json(self) -> dict:
        return {"A": self.A, "B": self.B, "residual_L2_correlation": self.correlation, "records": self.records}


def isoperimetric_audit(metric: ModelMetric, n_trials: int = 100, lengths: tuple = (5.0, 100.0), seed: int = 0,
                        constants: Constants | None = None) -> IsoperimetricAudit:
    """Fill random closed curves and fit the minimal linear envelope triangles <= A L + B."""
    constants = constants or derive_constants(metric)
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_trials):
        target = float(rng.uniform(*lengths))
        P = random_closed_curve(rng, target, metric)
        star, rep = normalize_to_star(metric, P, constants)
        cert = reduce_and_fill(metric, star, constants)
        records.append({"length": rep.length_in, "N": star.N, "triangles": cert.triangles})
    Ls = np.array([r["length"] for r in records])
    Ts = np.array([r["triangles"] for r in records], dtype=float)
    A, B = linear_envelope(Ls, Ts)
    X = np.column_stack([Ls, np.ones_like(Ls)])
    coef, *_ = np.linalg.lstsq(X, Ts, rcond=None)
    resid = Ts - X @ coef
    corr = float(np.corrcoef(resid, Ls ** 2)[0, 1]) if np.std(resid) > 0 else 0.0
    return IsoperimetricAudit(A, B, corr, records)


def linear_envelope(Ls: np.ndarray, Ts: np.ndarray) -> tuple[float, float]:
    """Nonnegative (A, B) with T_i <= A L_i + B minimizing the mean gap."""
    res = linprog(c=[float(np.mean(Ls)), 1.0], A_ub=-np.column_stack([Ls, np.ones_like(Ls)]), b_ub=-Ts,
                  bounds=[(0, None), (0, None)], method="highs")
    if not res.success:
        raise CheckFailed(f"envelope fit failed: {res.message}")
    return float(res.x[0]), float(res.x[1])
