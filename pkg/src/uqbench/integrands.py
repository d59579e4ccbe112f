"""Test integrands with exact means, plus joint Gaussian-process draws.

The registry covers the stress spectrum for interval calibration: smooth
light-tailed functions where the CLT behaves, a monomial family, a
power-law singularity whose variance can be infinite, and a rare-event
indicator.  Every entry carries its analytic mean; the d=1 entries of
bounded variation also carry their total variation so worst-case
discrepancy bounds can be checked end to end.

Joint GP draws sample (f(X), mu) from the exact prior implied by a kernel,
including the solver's nugget as iid observation noise, so credible-interval
coverage can be tested in the one setting where it must be exact.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .gp_cubature import (
    Kernel,
    chol_factor_with_escalation,
    dense_solve,
    gram,
    kernel_eval,
    kernel_means,
)
from .point_sets import PointSet
from .rng import RngStream

SINGULARITY_CLIP = 2.0**-53


class UnknownIntegrandError(KeyError):
    """Name not present in the registry."""


@dataclass(frozen=True)
class Integrand:
    """Evaluation map on [0,1]^d with analytic metadata.

    ``fn`` is vectorized over rows: it maps an (m, d) array to an (m,)
    array and must be reentrant.  ``exact_mean`` is the analytic integral
    (12+ digits) when available; ``hk_variation`` is the d=1 total
    variation when finite.
    """

    name: str
    dim: int
    fn: object
    exact_mean: float | None = None
    variance_finite: bool = True
    hk_variation: float | None = None
    tags: frozenset = frozenset()
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.dim:
            raise ValueError(
                f"{self.name} expects d={self.dim}, got points with d={x.shape[1]}"
            )
        return np.asarray(self.fn(x), dtype=float)


def _eval_constant(x, c):
    return np.full(x.shape[0], float(c))


def _eval_monomial(x, p):
    return x[:, 0] ** p


def _eval_product_linear(x, gamma):
    return np.prod(1.0 + gamma * (x - 0.5), axis=1)


def _eval_oscillatory(x):
    return np.sin(2.0 * math.pi * x[:, 0]) + 1.0


def _eval_heavy_tail(x, alpha):
    # Clip at the smallest positive argument we tolerate so the endpoint
    # evaluates to a large finite value instead of inf.
    x0 = np.maximum(x[:, 0], SINGULARITY_CLIP)
    return x0 ** (-alpha)


def _eval_rare_event(x, eps):
    return (x[:, 0] < eps).astype(float)


def _eval_exp_growth(x):
    return np.exp(x[:, 0])


def _make_constant(d, c=1.0):
    return Integrand(
        name="constant",
        dim=d,
        fn=functools.partial(_eval_constant, c=float(c)),
        exact_mean=float(c),
        hk_variation=0.0 if d == 1 else None,
        tags=frozenset({"smooth"}),
        params={"c": float(c)},
    )


def _make_monomial(d, p=2):
    p = int(p)
    if p < 0:
        raise ValueError("p must be a nonnegative integer")
    return Integrand(
        name="monomial",
        dim=d,
        fn=functools.partial(_eval_monomial, p=p),
        exact_mean=1.0 / (p + 1.0),
        hk_variation=(1.0 if p > 0 else 0.0) if d == 1 else None,
        tags=frozenset({"smooth", "monomial"}),
        params={"p": p},
    )


def _make_product_linear(d, gamma=0.5):
    gamma = float(gamma)
    return Integrand(
        name="product_linear",
        dim=d,
        fn=functools.partial(_eval_product_linear, gamma=gamma),
        exact_mean=1.0,
        hk_variation=abs(gamma) if d == 1 else None,
        tags=frozenset({"smooth"}),
        params={"gamma": gamma},
    )


def _make_oscillatory(d):
    return Integrand(
        name="oscillatory",
        dim=d,
        fn=_eval_oscillatory,
        exact_mean=1.0,
        hk_variation=4.0 if d == 1 else None,
        tags=frozenset({"smooth"}),
        params={},
    )


def _make_heavy_tail(d, alpha=0.75):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return Integrand(
        name="heavy_tail",
        dim=d,
        fn=functools.partial(_eval_heavy_tail, alpha=alpha),
        exact_mean=1.0 / (1.0 - alpha),
        variance_finite=alpha < 0.5,
        hk_variation=None,
        tags=frozenset({"heavy_tail"}),
        params={"alpha": alpha},
    )


def _make_rare_event(d, eps=1e-3):
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    return Integrand(
        name="rare_event",
        dim=d,
        fn=functools.partial(_eval_rare_event, eps=eps),
        exact_mean=eps,
        hk_variation=1.0 if d == 1 else None,
        tags=frozenset({"rare_event"}),
        params={"eps": eps},
    )


def _make_exp_growth(d):
    return Integrand(
        name="exp_growth",
        dim=d,
        fn=_eval_exp_growth,
        exact_mean=math.e - 1.0,
        hk_variation=(math.e - 1.0) if d == 1 else None,
        tags=frozenset({"smooth", "skewed"}),
        params={},
    )


_REGISTRY = {
    "constant": _make_constant,
    "monomial": _make_monomial,
    "product_linear": _make_product_linear,
    "oscillatory": _make_oscillatory,
    "heavy_tail": _make_heavy_tail,
    "rare_event": _make_rare_event,
    "exp_growth": _make_exp_growth,
}

# Accepted aliases: parameterized names used in experiment write-ups.
_ALIASES = {"monomial_p": "monomial", "heavy_tail_alpha": "heavy_tail",
            "rare_event_eps": "rare_event"}


def registry_get(name: str, d: int = 1, **params) -> Integrand:
    """Configured integrand from the registry."""
    if int(d) < 1:
        raise ValueError("d must be >= 1")
    key = _ALIASES.get(name, name)
    try:
        maker = _REGISTRY[key]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise UnknownIntegrandError(f"unknown integrand {name!r}; known: {known}")
    return maker(int(d), **params)


def registry_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def list_integrands(d: int = 1) -> list[dict]:
    """Default configuration of every registry entry, for the CLI listing."""
    out = []
    for name in registry_names():
        f = registry_get(name, d)
        out.append(
            {
                "name": name,
                "d": f.dim,
                "exact_mean": f.exact_mean,
                "variance_finite": f.variance_finite,
                "hk_variation": f.hk_variation,
                "tags": sorted(f.tags),
                "params": dict(f.params),
            }
        )
    return out


# --- joint GP draws -----------------------------------------------------------


@dataclass(frozen=True)
class JointGpDraw:
    """One draw of (f(X), mu) from the joint Gaussian implied by a kernel.

    The covariance is [[K, z], [z', kbarbar]] with K the nugget-augmented
    Gram matrix, so the draw matches exactly the model the cubature solver
    conditions on.
    """

    y: np.ndarray
    mu_true: float
    design: PointSet
    kernel: Kernel


def joint_covariance(kernel: Kernel, design: PointSet) -> np.ndarray:
    km = kernel_means(kernel, design)
    K = gram(kernel, design.points)
    n = design.n
    C = np.empty((n + 1, n + 1))
    C[:n, :n] = K
    C[:n, n] = km.z
    C[n, :n] = km.z
    C[n, n] = km.kbarbar
    return C


def gp_joint_draw(design: PointSet, kernel: Kernel, stream: RngStream) -> JointGpDraw:
    """Sample (y, mu) jointly; the scale-zero kernel degenerates to zeros."""
    n = design.n
    if kernel.scale == 0.0:
        return JointGpDraw(np.zeros(n), 0.0, design, kernel)
    C = joint_covariance(kernel, design)
    factor, _ = chol_factor_with_escalation(C, start=kernel.nugget)
    L = np.tril(factor[0]) if factor[1] else np.triu(factor[0]).T
    u = stream.generator().standard_normal(n + 1)
    vec = L @ u
    return JointGpDraw(vec[:n], float(vec[n]), design, kernel)


def _eval_gp_mean(x, kernel, X, alpha):
    k_xX = np.empty((x.shape[0], X.shape[0]))
    for i in range(X.shape[0]):
        k_xX[:, i] = kernel_eval(kernel, x, X[i : i + 1])
    return k_xX @ alpha


def make_gp_mean_integrand(
    kernel: Kernel, design: PointSet, stream: RngStream, name: str = "gp_mean_draw"
) -> Integrand:
    """Freeze one GP draw into an exactly integrable test integrand.

    Draws f(X) on the design, then uses the posterior-mean interpolant as
    the integrand itself.  Its integral is z' alpha exactly, so the result
    is a smooth in-model function with a known mean.
    """
    draw = gp_joint_draw(design, kernel, stream)
    K = gram(kernel, design.points)
    alpha, _ = dense_solve(K, draw.y)
    km = kernel_means(kernel, design)
    return Integrand(
        name=name,
        dim=design.d,
        fn=functools.partial(
            _eval_gp_mean, kernel=kernel, X=np.asarray(design.points), alpha=alpha
        ),
        exact_mean=float(km.z @ alpha),
        tags=frozenset({"smooth", "gp_draw"}),
        params={"kernel": kernel.to_config(), "n": design.n},
    )
