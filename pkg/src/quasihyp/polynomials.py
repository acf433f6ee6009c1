"""Real polynomials near a flat boundary point: vanishing order, growth bounds, contact order."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .domains import graph_domain, sphere_points
from .errors import InputError, PreconditionError

COEFF_TOL = 1e-12
_KEY = re.compile(r"^\(?\s*(\d+(?:\s*,\s*\d+)*)?\s*,?\s*\)?$")


@dataclass(frozen=True)
class PolynomialR:
    """sum of c_alpha y^alpha over multi-indices alpha in N^dim."""

    coeffs: dict = field(default_factory=dict)
    dim: int = 1

    def __post_init__(self):
        clean = {}
        for alpha, c in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim or min(alpha, default=0) < 0:
                raise InputError(f"multi-index {alpha} does not match dimension {self.dim}")
            if c != 0:
                clean[alpha] = clean.get(alpha, 0.0) + float(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def from_json(cls, data: dict, dim: int | None = None) -> PolynomialR:
        raw = data.get("coeffs")
        if not isinstance(raw, dict):
            raise InputError("key 'coeffs': expected an object mapping \"(i,j)\" to numbers")
        coeffs = {}
        for key, val in raw.items():
            m = _KEY.match(str(key).strip())
            if m is None or m.group(1) is None:
                raise InputError(f"key 'coeffs': cannot parse multi-index {key!r}")
            alpha = tuple(int(a) for a in m.group(1).split(","))
            try:
                coeffs[alpha] = float(val)
            except (TypeError, ValueError):
                raise InputError(f"key 'coeffs': value for {key!r} is not a number") from None
        lengths = {len(a) for a in coeffs}
        if dim is None:
            if len(lengths) > 1:
                raise InputError("key 'coeffs': multi-indices have mixed lengths")
            dim = lengths.pop() if lengths else 1
        return cls(coeffs, dim)

    def to_json(self) -> dict:
        return {"coeffs": {"(" + ",".join(map(str, a)) + ")": c for a, c in sorted(self.coeffs.items())}}

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def norm(self) -> float:
        return float(sum(abs(c) for c in self.coeffs.values()))

    def evaluate(self, Y) -> np.ndarray:
        """Values at points given along the last axis of Y."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape[-1:] != (self.dim,):
            raise InputError(f"points must have {self.dim} coordinates")
        flat = Y.reshape(-1, self.dim)
        if not self.coeffs:
            return np.zeros(Y.shape[:-1])
        alphas = np.array(list(self.coeffs), dtype=int)
        c = np.array(list(self.coeffs.values()))
        powers = flat[:, :, None] ** np.arange(self.degree + 1)
        terms = np.prod(powers[:, np.arange(self.dim), alphas], axis=2)
        return (terms @ c).reshape(Y.shape[:-1])

    __call__ = evaluate

    def __add__(self, other: PolynomialR) -> PolynomialR:
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0.0) + c
        return PolynomialR(out, self.dim)

    def __mul__(self, other: PolynomialR) -> PolynomialR:
        out: dict = {}
        for a, c in self.coeffs.items():
            for b, e in other.coeffs.items():
                key = tuple(i + j for i, j in zip(a, b))
                out[key] = out.get(key, 0.0) + c * e
        return PolynomialR(out, self.dim)

    def compose_linear(self, B) -> PolynomialR:
        """The polynomial z -> P(B z) for a (dim, m) matrix B."""
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != self.dim:
            raise InputError(f"substitution matrix must have {self.dim} rows")
        m = B.shape[1]
        linear = [PolynomialR({tuple(int(j == i) for j in range(m)): B[r, i] for i in range(m)}, m)
                  for r in range(self.dim)]
        one = PolynomialR({(0,) * m: 1.0}, m)
        out = PolynomialR({}, m)
        powers: dict = {}
        for alpha, c in self.coeffs.items():
            term = PolynomialR({(0,) * m: c}, m)
            for r, a in enumerate(alpha):
                if a:
                    if (r, a) not in powers:
                        acc = one
                        for _ in range(a):
                            acc = acc * linear[r]
                        powers[(r, a)] = acc
                    term = term * powers[(r, a)]
            out = out + term
        return out


def vanishing_order(P: PolynomialR, tol: float = COEFF_TOL) -> float:
    """Smallest total degree carrying a nonzero coefficient; inf for the zero polynomial."""
    degs = [sum(a) for a, c in P.coeffs.items() if abs(c) > tol]
    return float(min(degs)) if degs else math.inf


# --------------------------------------------------------------------------
# Growth bounds on balls
# --------------------------------------------------------------------------


def _ball_max(P: PolynomialR, r: float, rng: np.random.Generator, count: int = 1024) -> float:
    # max |P| over the closed ball of radius r: radial grid over a sphere lattice, then compass polish
    d = P.dim
    if d == 1:
        t = np.linspace(-r, r, 4001)
        vals = np.abs(P.evaluate(t[:, None]))
        i = int(np.argmax(vals))
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
        t2 = np.linspace(lo, hi, 401)
        return float(max(vals[i], np.max(np.abs(P.evaluate(t2[:, None])))))
    rot = np.linalg.qr(rng.standard_normal((d, d)))[0]
    S = np.asarray(sphere_points(d, count)) @ rot.T
    radii = r * np.linspace(0.0625, 1.0, 16)
    X = (radii[:, None, None] * S[None]).reshape(-1, d)
    vals = np.abs(P.evaluate(X))
    top = np.argsort(vals)[-8:]
    x, fx = X[top].copy(), vals[top].copy()
    step = np.full(len(top), 0.05 * r)
    E = np.vstack([np.eye(d), -np.eye(d)])
    while np.any(step > 1e-9 * r):
        cand = x[:, None, :] + step[:, None, None] * E[None]
        nrm = np.linalg.norm(cand, axis=2, keepdims=True)
        cand = np.where(nrm > r, cand * (r / nrm), cand)
        fc = np.abs(P.evaluate(cand))
        j = np.argmax(fc, axis=1)
        fj = fc[np.arange(len(top)), j]
        up = fj > fx
        x[up], fx[up] = cand[np.arange(len(top)), j][up], fj[up]
        step[~up] *= 0.5
    best = float(np.max(fx))
    return best


@dataclass
class BoundsReport:
    r: float
    R: float
    degree: int
    max_r: float
    max_R: float
    norm: float
    required: dict
    A: float

    def to_json(self) -> dict:
        return {"r": self.r, "R": self.R, "degree": self.degree, "max_r": self.max_r, "max_R": self.max_R,
                "norm": self.norm, "required": self.required, "A": self.A}


def polynomial_bounds_check(P: PolynomialR, r: float, R: float, seed: int = 0) -> BoundsReport:
    """Smallest A with (1/A)(r/R)^L M_R <= M_r <= A (r/R) M_R and (1/A) r^L |P| <= M_r <= A r |P|."""
    if abs(P.coeffs.get((0,) * P.dim, 0.0)) > COEFF_TOL:
        raise PreconditionError("the polynomial must vanish at the origin")
    if not 0 < r <= R:
        raise PreconditionError("radii must satisfy 0 < r <= R")
    if vanishing_order(P) == math.inf:
        raise PreconditionError("the zero polynomial has no growth bounds")
    rng = np.random.default_rng(seed)
    L = P.degree
    mr, mR, nrm = _ball_max(P, r, rng), _ball_max(P, R, rng), P.norm()
    req = {"lower_ratio": (r / R) ** L * mR / mr, "upper_ratio": mr * R / (r * mR),
           "lower_norm": r ** L * nrm / mr}
    if R <= 1:
        req["upper_norm"] = mr / (r * nrm)
    return BoundsReport(r, R, L, mr, mR, nrm, req, max(1.0, *req.values()))


def random_polynomial(dim: int, degree: int, rng: np.random.Generator) -> PolynomialR:
    coeffs = {}
    for total in range(1, degree + 1):
        for alpha in _multi_indices(dim, total):
            coeffs[alpha] = rng.standard_normal()
    return PolynomialR(coeffs, dim)


def _multi_indices(dim: int, total: int):
    if dim == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _multi_indices(dim - 1, total - first):
            yield (first,) + rest


def bounds_audit(dim: int, degree: int, n_polys: int = 50, poly_seed: int = 0, sample_seed: int = 0,
                 radii: tuple = ((0.1, 1.0), (0.25, 1.0), (0.5, 1.0))) -> dict:
    """Empirical A(d, L): the max required constant over random polynomials vanishing at 0."""
    rng = np.random.default_rng(poly_seed)
    polys = [random_polynomial(dim, degree, rng) for _ in range(n_polys)]
    worst = 1.0
    for P in polys:
        for r, R in radii:
            worst = max(worst, polynomial_bounds_check(P, r, R, seed=sample_seed).A)
    return {"dim": dim, "degree": degree, "n_polys": n_polys, "A": worst}


# --------------------------------------------------------------------------
# Contact order of graph domains
# --------------------------------------------------------------------------


@dataclass
class ContactOrder:
    L: float
    predicted_lambda: float
    frame: np.ndarray
    measured_lambda: float | None = None

    def to_json(self) -> dict:
        return {"L": self.L, "predicted_lambda": self.predicted_lambda, "frame": self.frame.tolist(),
                "measured_lambda": self.measured_lambda}


def convexity_violations(f: PolynomialR, width: float = 1.0, n_pairs: int = 2000, seed: int = 0,
                         tol: float = 1e-12) -> int:
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-width, width, (n_pairs, f.dim))
    Z = rng.uniform(-width, width, (n_pairs, f.dim))
    lhs = f.evaluate(0.5 * (Y + Z))
    rhs = 0.5 * (f.evaluate(Y) + f.evaluate(Z))
    return int(np.sum(lhs > rhs + tol * (1 + np.abs(rhs))))


def contact_order_graph_domain(f: PolynomialR, k: int, *, width: float = 1.0, height: float = 2.0,
                               n_random: int = 64, seed: int = 0, measure: bool = False) -> ContactOrder:
    """Worst vanishing order of f restricted to k-planes through 0 in the tangent hyperplane."""
    m = f.dim
    if not 1 <= k <= m:
        raise PreconditionError(f"k must lie in 1..{m} for tangential planes of this graph")
    if abs(f.coeffs.get((0,) * m, 0.0)) > COEFF_TOL:
        raise PreconditionError("f must vanish at 0")
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-width, width, (2000, m))
    if np.any(f.evaluate(Y) < -COEFF_TOL):
        raise PreconditionError("f must be nonnegative on the reference box")
    if convexity_violations(f, width, seed=seed):
        raise PreconditionError("f failed the sampled convexity check")
    frames = [np.eye(m)[:, list(c)] for c in combinations(range(m), k)]
    frames += [np.linalg.qr(rng.standard_normal((m, k)))[0] for _ in range(n_random)]
    best_L, best_B = -1.0, frames[0]
    for B in frames:
        nu = vanishing_order(f.compose_linear(B), tol=COEFF_TOL * max(1.0, f.norm()))
        if nu > best_L:
            best_L, best_B = nu, B
    out = ContactOrder(best_L, 0.0 if best_L == math.inf else 1.0 / best_L, best_B)
    if measure:
        from .hyperbolicity import expansion_profile, fit_expansion

        body = graph_domain(f.evaluate, m + 1, height, width, name="graph")
        V = np.vstack([np.zeros((1, k)), best_B])
        x = np.zeros(m + 1)
        p = body.base_point
        out.measured_lambda = fit_expansion(expansion_profile(body, x, p, V)).lam
    return out
