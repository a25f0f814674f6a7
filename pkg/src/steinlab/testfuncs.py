"""Smooth test functions with certified derivative sup-norms.

Three built-in families are provided, all with finite sup norm so they are
usable by every bound evaluator:

* ``cosine``: ``h(w) = cos(a . w + b)``. All derivative sup-norms and the
  standard-normal expectation are available in closed form, which gives the
  Monte Carlo harness exact ground truth.
* ``gauss-radial``: ``h(w) = exp(-|w|^2 / (2 s^2))``.
* ``product-logistic``: ``h(w) = prod_i sigmoid(a_i w_i)``.

The latter two are separable products, so a mixed-partial sup factors into
per-axis one-dimensional sups, which are certified by a refining grid search
(step halved until the change drops below 1e-8).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, UnsupportedDimension

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Gauss-Hermite quadrature for standard-normal expectations
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def gauss_hermite_1d(nodes: int):
    """Probabilists' Gauss-Hermite rule: ``E f(Z) ~= sum w_i f(x_i)``."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return x, w / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=16)
def _tensor_rule_cached(nodes: int, p: int):
    x, w = gauss_hermite_1d(nodes)
    grids = np.meshgrid(*([x] * p), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.ones(1)
    for _ in range(p):
        weights = np.outer(weights, w).reshape(-1)
    return points, weights


def gauss_hermite_tensor(nodes: int, p: int):
    """Tensor-product rule over ``R^p``; supported for ``p <= 4``."""
    if p > 4:
        raise UnsupportedDimension(f"tensor quadrature supports p <= 4, got {p}")
    if nodes < 2:
        raise ValueError("need at least 2 nodes per axis")
    if nodes**p <= 200_000:
        return _tensor_rule_cached(nodes, p)
    x, w = gauss_hermite_1d(nodes)
    grids = np.meshgrid(*([x] * p), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.ones(1)
    for _ in range(p):
        weights = np.outer(weights, w).reshape(-1)
    return points, weights


def gauss_hermite_mean(f, centers: np.ndarray, sigma: float, nodes: int,
                       max_block: int = 4_000_000):
    """``E f(c + sigma Z)`` for each row ``c`` of ``centers``, Z standard normal.

    Evaluates ``f`` on batches of at most ``max_block`` points to bound memory.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    m, p = centers.shape
    z, w = gauss_hermite_tensor(nodes, p)
    nq = z.shape[0]
    block = max(1, max_block // nq)
    out = np.empty(m)
    for lo in range(0, m, block):
        hi = min(m, lo + block)
        pts = centers[lo:hi][None, :, :] + sigma * z[:, None, :]
        vals = f(pts.reshape(-1, p)).reshape(nq, hi - lo)
        out[lo:hi] = w @ vals
    return out


@dataclass(frozen=True)
class GaussianExpectation:
    """How to evaluate expectations under a standard p-variate normal."""

    method: str = "gauss-hermite"
    nodes: int = 40
    samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("gauss-hermite", "monte-carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "gauss-hermite" and self.nodes < 2:
            raise ValueError("gauss-hermite needs nodes >= 2")
        if self.method == "monte-carlo" and self.samples < 1000:
            raise ValueError("monte-carlo needs samples >= 1000")

    def expect(self, f, p: int):
        """Return ``(E f(Z), error estimate)``.

        The error estimate is the change from a half-resolution rule for
        quadrature, or the standard error of the mean for Monte Carlo.
        """
        if self.method == "gauss-hermite":
            z, w = gauss_hermite_tensor(self.nodes, p)
            val = float(w @ f(z))
            half = max(2, self.nodes // 2)
            zh, wh = gauss_hermite_tensor(half, p)
            return val, abs(val - float(wh @ f(zh)))
        rng = np.random.Generator(
            np.random.Philox(key=np.array([self.seed & _MASK64, 0x9E3779B9],
                                          dtype=np.uint64))
        )
        total = 0.0
        total_sq = 0.0
        n = self.samples
        block = 262_144
        done = 0
        while done < n:
            take = min(block, n - done)
            vals = f(rng.standard_normal((take, p)))
            total += float(np.sum(vals))
            total_sq += float(np.sum(vals * vals))
            done += take
        mean = total / n
        var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
        return mean, float(np.sqrt(var / n))


# ---------------------------------------------------------------------------
# Built-in smooth test functions
# ---------------------------------------------------------------------------

KINDS = ("cosine", "gauss-radial", "product-logistic")


def _sigmoid(x):
    # overflow-free: exp(-|x|) <= 1 always; branchless for speed
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, t) / (1.0 + t)


def _refined_abs_max(f, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Sup of ``|f|`` on ``[lo, hi]`` by grid search with step halving."""
    xs = np.linspace(lo, hi, 4001)
    vals = np.abs(f(xs))
    i = int(np.argmax(vals))
    best = float(vals[i])
    step = (hi - lo) / 4000.0
    center = float(xs[i])
    while step > 1e-14:
        xs = np.linspace(center - step, center + step, 81)
        vals = np.abs(f(xs))
        i = int(np.argmax(vals))
        new_best = float(vals[i])
        center = float(xs[i])
        improved = new_best - best
        best = max(best, new_best)
        step /= 40.0
        if improved < tol and step < 1e-6:
            break
    return best


@dataclass(frozen=True)
class DerivativeNorms:
    """Certified sup-norms ``(||h||, ||Dh||, ||D2h||, ||D3h||)``."""

    h: float
    d1: float
    d2: float
    d3: float

    def order(self, k: int) -> float:
        return (self.h, self.d1, self.d2, self.d3)[k]


@dataclass(frozen=True)
class SmoothTestFunction:
    """A test function ``h: R^p -> R`` from one of the built-in families."""

    kind: str
    p: int
    a: tuple = ()
    b: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if self.kind in ("cosine", "product-logistic") and len(self.a) != self.p:
            raise DimensionMismatch(
                f"{self.kind} needs len(a) == p; got {len(self.a)} vs {self.p}"
            )
        if self.kind == "gauss-radial" and self.scale <= 0:
            raise ValueError("gauss-radial scale must be positive")

    # Evaluation ---------------------------------------------------------

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.p:
            raise DimensionMismatch(
                f"points have dimension {points.shape[1]}, expected {self.p}"
            )
        if self.kind == "cosine":
            return np.cos(points @ np.asarray(self.a) + self.b)
        if self.kind == "gauss-radial":
            return np.exp(-np.sum(points**2, axis=1) / (2.0 * self.scale**2))
        sig = _sigmoid(points * np.asarray(self.a))
        return np.prod(sig, axis=1)

    __call__ = evaluate

    # Certified norms ------------------------------------------------------

    def _axis_sups(self):
        """Per-axis sups of the factor and its first three derivatives."""
        sups = []
        if self.kind == "gauss-radial":
            s = self.scale

            def d0(x):
                return np.exp(-(x**2) / (2 * s**2))

            def d1(x):
                return -(x / s**2) * d0(x)

            def d2(x):
                return (x**2 / s**4 - 1.0 / s**2) * d0(x)

            def d3(x):
                return (3.0 * x / s**4 - x**3 / s**6) * d0(x)

            lo, hi = -10.0 * s, 10.0 * s
            sups = [[_refined_abs_max(f, lo, hi) for f in (d0, d1, d2, d3)]] * self.p
        else:  # product-logistic
            for ai in self.a:
                if ai == 0.0:
                    sups.append([0.5, 0.0, 0.0, 0.0])
                    continue

                def d0(x, ai=ai):
                    return _sigmoid(ai * x)

                def d1(x, ai=ai):
                    s = _sigmoid(ai * x)
                    return ai * s * (1 - s)

                def d2(x, ai=ai):
                    s = _sigmoid(ai * x)
                    return ai**2 * s * (1 - s) * (1 - 2 * s)

                def d3(x, ai=ai):
                    s = _sigmoid(ai * x)
                    return ai**3 * s * (1 - s) * (1 - 6 * s + 6 * s**2)

                span = 40.0 / abs(ai)
                sups.append([_refined_abs_max(f, -span, span)
                             for f in (d0, d1, d2, d3)])
        return sups

    def derivative_norms(self) -> DerivativeNorms:
        """Certified ``||h||`` and ``||D^k h||`` for ``k = 1, 2, 3``.

        For the cosine family these are exact: the mixed partial over axes
        ``i_1..i_k`` has sup ``|a_{i_1} ... a_{i_k}|`` (when ``a`` is nonzero
        the phase sweeps all of R), so ``||D^k h|| = (max_i |a_i|)^k``.
        """
        if self.kind == "cosine":
            a = np.asarray(self.a, dtype=float)
            amax = float(np.max(np.abs(a))) if a.size else 0.0
            h_sup = 1.0 if amax > 0 else abs(float(np.cos(self.b)))
            return DerivativeNorms(h_sup, amax, amax**2, amax**3)
        sups = self._axis_sups()
        norms = [0.0, 0.0, 0.0]
        for k in (1, 2, 3):
            best = 0.0
            for axes in itertools.combinations_with_replacement(range(self.p), k):
                mult = [0] * self.p
                for ax in axes:
                    mult[ax] += 1
                prod = 1.0
                for i in range(self.p):
                    prod *= sups[i][mult[i]]
                best = max(best, prod)
            norms[k - 1] = best
        h_sup = 1.0
        for i in range(self.p):
            h_sup *= sups[i][0]
        return DerivativeNorms(h_sup, *norms)

    # Closed-form normal expectation for the cosine family (ground truth).

    def phi_closed_form(self):
        if self.kind == "cosine":
            a = np.asarray(self.a, dtype=float)
            return float(np.exp(-0.5 * np.sum(a**2)) * np.cos(self.b))
        if self.kind == "gauss-radial":
            s = self.scale
            return float((s / np.sqrt(1.0 + s * s)) ** self.p)
        return 0.5**self.p  # sigmoid(a Z) has mean 1/2 by symmetry, any a

    def spec_string(self) -> str:
        if self.kind == "cosine":
            return "cosine:a=%s:b=%r" % (",".join(repr(x) for x in self.a), self.b)
        if self.kind == "gauss-radial":
            return "gauss-radial:scale=%r:p=%d" % (self.scale, self.p)
        return "product-logistic:a=%s" % ",".join(repr(x) for x in self.a)


def phi_h(h, cfg: GaussianExpectation | None = None, p: int | None = None):
    """``E h(Z)`` with Z standard p-variate normal, plus an error estimate.

    ``h`` may be a :class:`SmoothTestFunction` or any callable mapping a
    ``(m, p)`` batch to ``(m,)`` values (then ``p`` must be given).
    """
    cfg = cfg or GaussianExpectation()
    if isinstance(h, SmoothTestFunction):
        return cfg.expect(h.evaluate, h.p)
    if p is None:
        raise DimensionMismatch("p is required when h is a raw callable")
    return cfg.expect(h, p)


# ---------------------------------------------------------------------------
# CLI spec parsing: e.g. "cosine:a=1,0.5:b=0"
# ---------------------------------------------------------------------------

def parse_test_function(spec: str) -> SmoothTestFunction:
    parts = spec.strip().split(":")
    kind = parts[0].strip().lower()
    kv = {}
    for part in parts[1:]:
        if not part:
            continue
        key, _, value = part.partition("=")
        kv[key.strip()] = value.strip()
    if kind == "cosine":
        if "a" not in kv:
            raise ValueError("cosine spec needs a=...")
        a = tuple(float(x) for x in kv["a"].split(","))
        return SmoothTestFunction("cosine", p=len(a), a=a,
                                  b=float(kv.get("b", "0")))
    if kind in ("gauss-radial", "gaussradial"):
        return SmoothTestFunction("gauss-radial", p=int(kv.get("p", "1")),
                                  scale=float(kv.get("scale", "1")))
    if kind in ("product-logistic", "logistic"):
        if "a" not in kv:
            raise ValueError("product-logistic spec needs a=...")
        a = tuple(float(x) for x in kv["a"].split(","))
        return SmoothTestFunction("product-logistic", p=len(a), a=a)
    raise ValueError(f"unknown test function {spec!r}")
