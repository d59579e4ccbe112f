"""Integral estimators and their interval constructions.

Four families, one result type.  Every estimator is a weighted sum of
observed integrand values; the weights are equal for MC/RQMC and are the
cubature weights K^-1 z for the GP methods.  ``Estimate.interval`` maps a
level in (0,1) to a two-sided interval of the matching kind:

    clt                 normal quantile times a standard error
    student_t(df)       replicate-based t interval
    bootstrap_t         studentized resampling quantiles
    gaussian_posterior  normal quantile times a posterior sd
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri, stdtrit

from .gp_cubature import (
    Kernel,
    circulant_solve,
    dense_solve,
    gram,
    kernel_eval,
    kernel_means,
)
from .integrands import Integrand
from .point_sets import PointSet, iid_points, korobov_vector, lattice_points, randomize, sobol_points
from .rng import RngStream

INTERVAL_KINDS = ("clt", "student_t", "bootstrap_t", "gaussian_posterior")

RQMC_RULES = {
    "sobol+digital_shift": ("sobol", "digital_shift"),
    "sobol+nested_scramble": ("sobol", "nested_scramble"),
    "lattice+shift_mod1": ("lattice", "shift_mod1"),
}


class NonFiniteEvaluationError(ValueError):
    """The integrand returned a non-finite value."""


def normal_quantile(q: float) -> float:
    """Inverse standard normal CDF (double-precision accurate)."""
    return float(ndtri(q))


def student_t_quantile(df: int, q: float) -> float:
    return float(stdtrit(df, q))


@dataclass
class Estimate:
    """Point estimate with an uncertainty scale and interval constructor."""

    mu_hat: float
    scale: float
    interval_kind: str
    method: str
    n_evals: int
    flops_linear: float = 0.0
    df: int | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.interval_kind not in INTERVAL_KINDS:
            raise ValueError(f"unknown interval kind {self.interval_kind!r}")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if self.interval_kind == "student_t" and not (self.df and self.df >= 1):
            raise ValueError("student_t intervals need df >= 1")

    def interval(self, level: float) -> tuple[float, float]:
        """Two-sided interval at the given level in (0, 1)."""
        if not 0.0 < level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {level}")
        if self.interval_kind == "bootstrap_t":
            t = np.asarray(self.aux["t_stats"], dtype=float)
            alpha = 1.0 - level
            t_lo, t_hi = np.quantile(t, [alpha / 2.0, 1.0 - alpha / 2.0])
            return (self.mu_hat - t_hi * self.scale, self.mu_hat - t_lo * self.scale)
        if self.interval_kind == "student_t":
            q = student_t_quantile(self.df, 0.5 + level / 2.0)
        else:
            q = normal_quantile(0.5 + level / 2.0)
        return (self.mu_hat - q * self.scale, self.mu_hat + q * self.scale)

    def to_payload(self, levels=()) -> dict:
        out = {
            "method": self.method,
            "mu_hat": self.mu_hat,
            "scale": self.scale,
            "interval_kind": self.interval_kind,
            "n_evals": int(self.n_evals),
            "flops_linear": float(self.flops_linear),
        }
        if self.df is not None:
            out["df"] = int(self.df)
        if levels:
            out["intervals"] = {
                _level_key(lv): list(self.interval(lv)) for lv in levels
            }
        return out


def _level_key(level: float) -> str:
    return f"{level:g}"


def _checked_values(f: Integrand, points: np.ndarray) -> np.ndarray:
    vals = f(points)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonFiniteEvaluationError(
            f"{f.name} returned {vals[i]!r} at x={points[i].tolist()}"
        )
    return vals


def mc_estimate(f: Integrand, n: int, stream: RngStream) -> Estimate:
    """Plain Monte Carlo with the CLT standard error s/sqrt(n)."""
    if n < 2:
        raise ValueError("mc_estimate needs n >= 2")
    ps = iid_points(n, f.dim, stream)
    vals = _checked_values(f, ps.points)
    mu = float(np.mean(vals))
    s = float(np.std(vals, ddof=1))
    return Estimate(
        mu_hat=mu,
        scale=s / math.sqrt(n),
        interval_kind="clt",
        method="mc",
        n_evals=n,
    )


def bootstrap_t_interval(
    sample_values: np.ndarray,
    level: float,
    B: int = 1000,
    stream: RngStream | None = None,
) -> tuple[float, float]:
    """Studentized bootstrap interval for a sample mean.

    Resamples with replacement B times; each resample contributes
    t* = (mean* - mean) / (s*/sqrt(n)), with t* defined as 0 when the
    resample is degenerate (s* = 0).  Quantiles use the usual type-7
    interpolation.  All-equal input gives a zero-width interval.
    """
    values = np.asarray(sample_values, dtype=float)
    n = values.shape[0]
    if n < 8:
        raise ValueError("bootstrap_t_interval needs n >= 8")
    if B < 200:
        raise ValueError("bootstrap_t_interval needs B >= 200")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if stream is None:
        stream = RngStream(0)
    mu = float(np.mean(values))
    s = float(np.std(values, ddof=1))
    if s == 0.0:
        return (mu, mu)
    est = _bootstrap_t_estimate(values, B, stream)
    return est.interval(level)


def _bootstrap_t_estimate(values: np.ndarray, B: int, stream: RngStream) -> Estimate:
    n = values.shape[0]
    mu = float(np.mean(values))
    s = float(np.std(values, ddof=1))
    se = s / math.sqrt(n)
    gen = stream.generator()
    idx = gen.integers(0, n, size=(B, n))
    res = values[idx]
    means = res.mean(axis=1)
    stds = res.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (means - mu) / (stds / math.sqrt(n))
    t = np.where(stds == 0.0, 0.0, t)
    return Estimate(
        mu_hat=mu,
        scale=se,
        interval_kind="bootstrap_t",
        method="mc_bootstrap_t",
        n_evals=n,
        aux={"t_stats": t},
    )


def mc_bootstrap_estimate(
    f: Integrand, n: int, stream: RngStream, B: int = 1000
) -> Estimate:
    """MC point estimate carrying bootstrap-t interval machinery.

    The sample comes from the stream itself; resampling uses a child
    stream so the draw and the bootstrap never share randomness.
    """
    ps = iid_points(n, f.dim, stream)
    vals = _checked_values(f, ps.points)
    if float(np.std(vals, ddof=1)) == 0.0:
        return Estimate(
            mu_hat=float(np.mean(vals)),
            scale=0.0,
            interval_kind="bootstrap_t",
            method="mc_bootstrap_t",
            n_evals=n,
            aux={"t_stats": np.zeros(B)},
        )
    est = _bootstrap_t_estimate(vals, B, stream.child(1))
    return est


def rqmc_estimate(
    f: Integrand, n: int, m: int, rule: str, stream: RngStream
) -> Estimate:
    """Randomized QMC: m independent randomizations of one n-point rule.

    The replicate means are exchangeable and unbiased, so their spread
    gives a Student-t interval with m-1 degrees of freedom.
    """
    if m < 2:
        raise ValueError("rqmc_estimate needs m >= 2")
    if rule not in RQMC_RULES:
        raise ValueError(f"unknown rule {rule!r}; options: {sorted(RQMC_RULES)}")
    generator, kind = RQMC_RULES[rule]
    if generator == "sobol":
        base = sobol_points(n, f.dim)
    else:
        base = lattice_points(n, korobov_vector(n, f.dim))
    reps = np.empty(m)
    for r in range(m):
        rps = randomize(base, kind, stream.child(r))
        reps[r] = float(np.mean(_checked_values(f, rps.points)))
    mu = float(np.mean(reps))
    scale = float(np.std(reps, ddof=1)) / math.sqrt(m)
    return Estimate(
        mu_hat=mu,
        scale=scale,
        interval_kind="student_t",
        method=f"rqmc[{rule}]",
        n_evals=n * m,
        df=m - 1,
        aux={"replicates": reps},
    )


def bc_estimate(
    f_values: np.ndarray,
    design: PointSet,
    kernel: Kernel,
    solver: str = "auto",
) -> Estimate:
    """Bayesian cubature: Gaussian posterior for the integral.

    Posterior mean z' K^-1 y and posterior variance kbarbar - z' K^-1 z,
    with the cubature weights K^-1 z exposed.  ``solver`` may be ``dense``,
    ``circulant`` (rank-1 lattice design in index order with a
    shift-invariant periodic kernel), or ``auto`` to pick circulant when
    the structure allows it.
    """
    y = np.asarray(f_values, dtype=float)
    if y.shape[0] != design.n:
        raise ValueError(f"got {y.shape[0]} values for a design of {design.n} points")
    if solver == "auto":
        solver = "circulant" if _circulant_ok(design, kernel) else "dense"
    km = kernel_means(kernel, design)
    if solver == "circulant":
        if not _circulant_ok(design, kernel):
            raise ValueError(
                "circulant solve needs lattice points in index order and a "
                "shift-invariant periodic kernel"
            )
        first_row = np.asarray(
            kernel_eval(kernel, np.broadcast_to(design.points[0], design.points.shape),
                        design.points),
            dtype=float,
        ).reshape(design.n)
        first_row = first_row.copy()
        first_row[0] += kernel.nugget * kernel.scale * (
            first_row[0] / max(kernel.scale, 1e-300) if kernel.scale else 0.0
        )
        sol, info = circulant_solve(first_row, np.column_stack([y, km.z]))
        flops = 2.0 * info.flops
        aux_extra = {"floored_modes": info.floored_modes}
    else:
        K = gram(kernel, design.points)
        sol, info = dense_solve(K, np.column_stack([y, km.z]))
        flops = info.flops
        aux_extra = {"nugget_added": info.nugget_added}
    alpha, w = sol[:, 0], sol[:, 1]
    mu = float(km.z @ alpha)
    var = max(float(km.kbarbar - km.z @ w), 0.0)
    return Estimate(
        mu_hat=mu,
        scale=math.sqrt(var),
        interval_kind="gaussian_posterior",
        method=f"bc[{solver}]",
        n_evals=design.n,
        flops_linear=flops,
        aux={"weights": w, **aux_extra},
    )


def _circulant_ok(design: PointSet, kernel: Kernel) -> bool:
    return (
        design.generator == "lattice"
        and design.randomization in ("none", "shift_mod1")
        and kernel.family == "bernoulli_lattice"
    )


@dataclass(frozen=True)
class McResidual:
    """Estimate the residual integral by plain MC at fresh points."""

    n: int

    @property
    def n_evals(self) -> int:
        return self.n


@dataclass(frozen=True)
class RqmcResidual:
    """Estimate the residual integral by RQMC at fresh points."""

    n: int
    m: int = 8
    rule: str = "sobol+digital_shift"

    @property
    def n_evals(self) -> int:
        return self.n * self.m


def cv_estimate(
    f: Integrand,
    design: PointSet,
    kernel: Kernel,
    residual_sampler,
    stream: RngStream,
) -> Estimate:
    """Control-variate split: integrate the interpolant exactly, sample the rest.

    Fit the GP posterior-mean approximation on the design, integrate it in
    closed form, and estimate the residual integral at fresh points with
    the requested sampler.  Residual points always come from a child
    stream, never from the design, so interpolation zeros cannot bias the
    residual term.
    """
    y = _checked_values(f, design.points)
    K = gram(kernel, design.points)
    km = kernel_means(kernel, design)
    alpha, info = dense_solve(K, y)
    term1 = float(km.z @ alpha)
    X = np.asarray(design.points)

    def residual(pts: np.ndarray) -> np.ndarray:
        k_xX = np.empty((pts.shape[0], X.shape[0]))
        for i in range(X.shape[0]):
            k_xX[:, i] = kernel_eval(kernel, pts, X[i : i + 1])
        return _checked_values(f, pts) - k_xX @ alpha

    res_fn = Integrand(name=f"residual({f.name})", dim=f.dim, fn=residual)
    sub = stream.child(1)
    if isinstance(residual_sampler, McResidual):
        if residual_sampler.n < 2:
            raise ValueError("residual sampler needs at least 2 evaluations")
        r = mc_estimate(res_fn, residual_sampler.n, sub)
    elif isinstance(residual_sampler, RqmcResidual):
        r = rqmc_estimate(
            res_fn, residual_sampler.n, residual_sampler.m, residual_sampler.rule, sub
        )
    else:
        raise TypeError("residual_sampler must be McResidual or RqmcResidual")
    pred_flops = 2.0 * residual_sampler.n_evals * design.n
    return Estimate(
        mu_hat=term1 + r.mu_hat,
        scale=r.scale,
        interval_kind=r.interval_kind,
        method=f"cv[{r.method}]",
        n_evals=design.n + r.n_evals,
        flops_linear=info.flops + pred_flops + r.flops_linear,
        df=r.df,
        aux={"term1": term1, "residual_mu": r.mu_hat, "design_n": design.n},
    )
