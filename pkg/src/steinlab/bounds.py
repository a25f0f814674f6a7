"""Evaluators for the four normal-approximation bound theorems.

Two theorems consume size-bias coupling statistics (univariate and
multivariate) and two consume local-dependence statistics. All matrix norms
are max-absolute-entry, the convention the formulas are stated in; the
spectral norm of the whitening matrix is logged alongside for diagnostics.

Standard errors of estimated inputs are propagated to each term by a
first-order delta method and reported, but never added to the bound itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonfiniteNorm
from .harness import Accumulator, StreamConfig, parallel_mc
from .linalg import inverse_sqrt, max_abs_norm, spectral_max_abs, symmetrize
from .sizebias import COORD_STREAM_STRIDE, CoupledPairSampler

SQRT_HALF_PI = float(np.sqrt(np.pi / 2.0))


# ---------------------------------------------------------------------------
# Statistics containers
# ---------------------------------------------------------------------------

@dataclass
class UnivariateCouplingStats:
    """Inputs to the univariate size-bias bound.

    ``var_cond`` estimates ``Var E[W* - W | .]`` (the conditioning sigma-field
    is the caller's choice and only enlarges the bound when coarser than W);
    ``mean_sq_diff`` estimates ``E (W* - W)^2``.
    """

    lam: float
    sigma_sq: float
    var_cond: float
    mean_sq_diff: float
    var_cond_sem: float = 0.0
    mean_sq_diff_sem: float = 0.0
    sigma_field: str = "W"


@dataclass
class MultivariateCouplingStats:
    """Inputs to the multivariate size-bias bound.

    ``var_cond[i, j]`` estimates ``Var E[W^i_j - W_j | .]`` and
    ``abs_cross[i, j, k]`` estimates ``E |(W^i_j - W_j)(W^i_k - W_k)|``.
    """

    p: int
    lam: np.ndarray
    sigma: np.ndarray
    var_cond: np.ndarray
    abs_cross: np.ndarray
    var_cond_sem: np.ndarray = None
    abs_cross_sem: np.ndarray = None
    sigma_field: str = "W"

    def __post_init__(self):
        if self.var_cond_sem is None:
            self.var_cond_sem = np.zeros((self.p, self.p))
        if self.abs_cross_sem is None:
            self.abs_cross_sem = np.zeros((self.p, self.p, self.p))


@dataclass
class LocalDepStats:
    """Inputs to the local-dependence bounds.

    ``t1[i, j]`` is the root of the expected squared centered quadratic form
    over neighborhood pairs, ``t2`` the total absolute conditional mean given
    the outside of each neighborhood (zero under true local independence),
    and ``t3[i, j, k]`` the absolute triple-product moments.
    """

    p: int
    sigma: np.ndarray
    t1: np.ndarray
    t2: float
    t3: np.ndarray
    t1_sem: np.ndarray = None
    t3_sem: np.ndarray = None

    def __post_init__(self):
        if self.t1_sem is None:
            self.t1_sem = np.zeros((self.p, self.p))
        if self.t3_sem is None:
            self.t3_sem = np.zeros((self.p, self.p, self.p))


@dataclass
class BoundTerm:
    name: str
    value: float
    stderr: float = 0.0


@dataclass
class BoundReport:
    """A certified bound with its per-term breakdown."""

    theorem: str
    terms: list
    total: float
    stderr: float
    inputs: dict = field(default_factory=dict)
    seed: int | None = None

    def to_jsonable(self) -> dict:
        return {
            "theorem": self.theorem,
            "terms": [
                {"name": t.name, "value": t.value, "stderr": t.stderr}
                for t in self.terms
            ],
            "total": self.total,
            "stderr": self.stderr,
            "inputs": self.inputs,
            "seed": self.seed,
        }


def _require_finite(**norms):
    for name, value in norms.items():
        if not np.isfinite(value):
            raise NonfiniteNorm(f"{name} must be finite, got {value}")


def _sqrt_with_sem(v, sem):
    """Delta-method propagation through sqrt; at v = 0 use sqrt(sem)."""
    v = np.maximum(np.asarray(v, dtype=float), 0.0)
    sem = np.asarray(sem, dtype=float)
    root = np.sqrt(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(root > 0, sem / np.where(root > 0, 2.0 * root, 1.0),
                       np.sqrt(sem))
    return root, out


def _finish(theorem, terms, inputs, seed=None):
    total = float(sum(t.value for t in terms))
    stderr = float(np.sqrt(sum(t.stderr**2 for t in terms)))
    return BoundReport(theorem, terms, total, stderr, inputs, seed)


# ---------------------------------------------------------------------------
# Theorem evaluators
# ---------------------------------------------------------------------------

def bound_univariate_size_bias(stats: UnivariateCouplingStats,
                               h_norm: float, dh_norm: float) -> BoundReport:
    """Univariate size-bias bound:

    ``2 ||h|| (lam / sigma^2) sqrt(Var E[W* - W | .])
      + ||h'|| (lam / sigma^3) E (W* - W)^2``.
    """
    _require_finite(h_norm=h_norm, dh_norm=dh_norm)
    if stats.sigma_sq <= 0:
        raise ValueError("sigma^2 must be positive")
    sigma = np.sqrt(stats.sigma_sq)
    root, root_sem = _sqrt_with_sem(stats.var_cond, stats.var_cond_sem)
    c1 = 2.0 * h_norm * stats.lam / stats.sigma_sq
    c2 = dh_norm * stats.lam / sigma**3
    terms = [
        BoundTerm("conditional-variance", float(c1 * root), float(c1 * root_sem)),
        BoundTerm("mean-square-difference", float(c2 * stats.mean_sq_diff),
                  float(c2 * stats.mean_sq_diff_sem)),
    ]
    inputs = {
        "lambda": stats.lam, "sigma_sq": stats.sigma_sq,
        "var_cond": stats.var_cond, "mean_sq_diff": stats.mean_sq_diff,
        "h_norm": h_norm, "dh_norm": dh_norm,
        "sigma_field": stats.sigma_field,
    }
    return _finish("univariate-size-bias", terms, inputs)


def bound_multivariate_size_bias(stats: MultivariateCouplingStats,
                                 d2h_norm: float, d3h_norm: float) -> BoundReport:
    """Multivariate size-bias bound:

    ``(p^2/2) ||S||^2 ||D2h|| sum_ij lam_i sqrt(var_cond[i,j])
      + (p^3/6) ||S||^3 ||D3h|| sum_ijk lam_i abs_cross[i,j,k]``,
    with ``S`` the inverse square root of the covariance and ``||.||`` the
    max-absolute-entry norm.
    """
    _require_finite(d2h_norm=d2h_norm, d3h_norm=d3h_norm)
    p = stats.p
    isqrt = inverse_sqrt(symmetrize(stats.sigma))
    snorm = max_abs_norm(isqrt)
    lam = np.asarray(stats.lam, dtype=float)
    root, root_sem = _sqrt_with_sem(stats.var_cond, stats.var_cond_sem)
    c1 = 0.5 * p**2 * snorm**2 * d2h_norm
    t1 = c1 * float(lam @ root.sum(axis=1))
    t1_sem = c1 * float(np.sqrt(np.sum((lam[:, None] * root_sem) ** 2)))
    c2 = (p**3 / 6.0) * snorm**3 * d3h_norm
    t2 = c2 * float(np.sum(lam[:, None, None] * stats.abs_cross))
    t2_sem = c2 * float(
        np.sqrt(np.sum((lam[:, None, None] * stats.abs_cross_sem) ** 2))
    )
    terms = [
        BoundTerm("conditional-variance", t1, t1_sem),
        BoundTerm("absolute-cross-moment", t2, t2_sem),
    ]
    inputs = {
        "p": p, "lambda": lam, "sigma": stats.sigma,
        "sigma_isqrt_max_norm": snorm,
        "sigma_isqrt_spectral_norm": spectral_max_abs(isqrt),
        "d2h_norm": d2h_norm, "d3h_norm": d3h_norm,
        "sigma_field": stats.sigma_field,
    }
    return _finish("multivariate-size-bias", terms, inputs)


def bound_univariate_local(sigma_sq: float, t1: float, t2: float, t3: float,
                           h_norm: float, dh_norm: float,
                           sems=(0.0, 0.0, 0.0)) -> BoundReport:
    """Univariate local-dependence bound:

    ``(2 ||h|| / sigma^2) t1 + sqrt(pi/2) (||h|| / sigma) t2
      + (||h'|| / sigma^3) t3``

    where t1 is the root mean square of the centered pair sum, t2 the total
    absolute conditional mean outside the neighborhoods, and t3 the absolute
    triple moment sum.
    """
    _require_finite(h_norm=h_norm, dh_norm=dh_norm)
    if sigma_sq <= 0:
        raise ValueError("sigma^2 must be positive")
    sigma = np.sqrt(sigma_sq)
    c = (2.0 * h_norm / sigma_sq, SQRT_HALF_PI * h_norm / sigma,
         dh_norm / sigma**3)
    terms = [
        BoundTerm("pair-fluctuation", c[0] * t1, c[0] * sems[0]),
        BoundTerm("outside-neighborhood-mean", c[1] * t2, c[1] * sems[1]),
        BoundTerm("triple-moment", c[2] * t3, c[2] * sems[2]),
    ]
    inputs = {"sigma_sq": sigma_sq, "t1": t1, "t2": t2, "t3": t3,
              "h_norm": h_norm, "dh_norm": dh_norm}
    return _finish("univariate-local-dependence", terms, inputs)


def bound_multivariate_local(stats: LocalDepStats, dh_norm: float,
                             d2h_norm: float, d3h_norm: float) -> BoundReport:
    """Multivariate local-dependence bound:

    ``(p^2/2) ||S||^2 ||D2h|| sum_ij t1[i,j] + p ||S|| ||Dh|| t2
      + (p^3/6) ||S||^3 ||D3h|| sum_ijk t3[i,j,k]``.
    """
    _require_finite(dh_norm=dh_norm, d2h_norm=d2h_norm, d3h_norm=d3h_norm)
    p = stats.p
    isqrt = inverse_sqrt(symmetrize(stats.sigma))
    snorm = max_abs_norm(isqrt)
    c1 = 0.5 * p**2 * snorm**2 * d2h_norm
    c2 = p * snorm * dh_norm
    c3 = (p**3 / 6.0) * snorm**3 * d3h_norm
    terms = [
        BoundTerm("pair-fluctuation", c1 * float(np.sum(stats.t1)),
                  c1 * float(np.sqrt(np.sum(stats.t1_sem**2)))),
        BoundTerm("outside-neighborhood-mean", c2 * stats.t2, 0.0),
        BoundTerm("triple-moment", c3 * float(np.sum(stats.t3)),
                  c3 * float(np.sqrt(np.sum(stats.t3_sem**2)))),
    ]
    inputs = {
        "p": p, "sigma": stats.sigma,
        "sigma_isqrt_max_norm": snorm,
        "sigma_isqrt_spectral_norm": spectral_max_abs(isqrt),
        "dh_norm": dh_norm, "d2h_norm": d2h_norm, "d3h_norm": d3h_norm,
    }
    return _finish("multivariate-local-dependence", terms, inputs)


# ---------------------------------------------------------------------------
# Covariance identity check
# ---------------------------------------------------------------------------

@dataclass
class CovarianceIdentityResult:
    estimates: np.ndarray   # lam_i * mean(W^i_j - W_j)
    sems: np.ndarray        # lam_i * sem of the mean
    target: np.ndarray
    zscores: np.ndarray
    samples: int
    seed: int

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.zscores)))


def covariance_identity_check(sampler: CoupledPairSampler, sigma_target,
                              samples: int, seed: int = 0,
                              chunk_size: int = 16384) -> CovarianceIdentityResult:
    """Check ``lam_i E(W^i_j - W_j) = sigma_ij`` for every ``(i, j)``.

    Returns standardized deviations from the target covariance; with a
    correct coupler these are asymptotically standard normal.
    """
    cfg = StreamConfig(seed, chunk_size)
    lam = np.asarray(sampler.mean_vector, dtype=float)
    sigma_target = np.asarray(sigma_target, dtype=float)
    p = sampler.p
    est = np.empty((p, p))
    sems = np.empty((p, p))
    for i in range(p):
        def task(rng, size, i=i):
            w, wi = sampler.draw_batch(i, size, rng)
            return Accumulator(shape=(p,)).add(wi - w)

        acc = parallel_mc(task, cfg.offset(i * COORD_STREAM_STRIDE), samples)
        est[i] = lam[i] * acc.mean
        sems[i] = lam[i] * acc.sem
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sems > 0, (est - sigma_target) / np.where(sems > 0, sems, 1.0),
                     np.where(est == sigma_target, 0.0, np.inf))
    return CovarianceIdentityResult(est, sems, sigma_target, z, samples, seed)
