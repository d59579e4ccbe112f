"""Kernels, kernel means, and the linear algebra behind Bayesian cubature.

All kernels have product structure across dimensions.  Kernel means are the
single and double integrals of the covariance against the uniform measure
on [0,1]^d; they are what make the integral posterior closed-form:

    posterior mean  = z' K^-1 y
    posterior var   = kbarbar - z' K^-1 z

Linear solves come in two flavors: a dense symmetric factorization with
nugget escalation, and an FFT diagonalization for the circulant Gram
matrices produced by rank-1 lattices with shift-invariant periodic kernels.
Both record a deterministic model flop count so methods can be compared at
equal compute without timing noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.special import erf

KERNEL_FAMILIES = (
    "squared_exponential",
    "matern_half",
    "brownian",
    "bernoulli_lattice",
)

NUGGET_DEFAULT = 1e-10
NUGGET_CAP = 1e-6
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class FactorizationError(RuntimeError):
    """Gram matrix is not positive definite even after nugget escalation."""


@dataclass(frozen=True)
class Kernel:
    """Covariance family with lengthscale, scale, and relative nugget.

    ``lengthscale`` and ``gamma`` may be scalars (shared across dimensions)
    or per-dimension tuples.  ``nugget`` is relative: solves add
    ``nugget * mean(diag(K))`` to the Gram diagonal, which equals
    ``scale * nugget`` for unit-diagonal stationary families.
    """

    family: str
    lengthscale: float | tuple[float, ...] = 1.0
    scale: float = 1.0
    nugget: float = NUGGET_DEFAULT
    gamma: float | tuple[float, ...] = 1.0

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        for ell in np.atleast_1d(self.lengthscale):
            if not ell > 0:
                raise ValueError("lengthscale must be positive")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")
        if self.nugget < 0:
            raise ValueError("nugget must be nonnegative")

    def per_dim(self, value, d: int) -> np.ndarray:
        out = np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=float)), (d,))
        return np.ascontiguousarray(out)

    def to_config(self) -> dict:
        cfg = {
            "family": self.family,
            "lengthscale": _plain(self.lengthscale),
            "scale": self.scale,
            "nugget": self.nugget,
        }
        if self.family == "bernoulli_lattice":
            cfg["gamma"] = _plain(self.gamma)
        return cfg


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


@dataclass(frozen=True)
class KernelMeans:
    """z_i = int k(x, x_i) dx and kbarbar = double integral of k."""

    z: np.ndarray
    kbarbar: float


def _bernoulli2(t: np.ndarray) -> np.ndarray:
    return t * t - t + 1.0 / 6.0


def kernel_eval(kernel: Kernel, x, y) -> np.ndarray | float:
    """Pointwise covariance, broadcasting over rows of x and y.

    No nugget is included: the nugget lives on the Gram diagonal only (see
    :func:`gram`), so duplicated design points stay regularizable.
    """
    xa = np.atleast_2d(np.asarray(x, dtype=float))
    ya = np.atleast_2d(np.asarray(y, dtype=float))
    xa, ya = np.broadcast_arrays(xa, ya)
    d = xa.shape[1]
    if kernel.family == "brownian":
        if d != 1:
            raise ValueError("brownian kernel is d=1 only")
        out = kernel.scale * np.minimum(xa[:, 0], ya[:, 0])
    elif kernel.family == "squared_exponential":
        ell = kernel.per_dim(kernel.lengthscale, d)
        out = kernel.scale * np.exp(
            -np.sum((xa - ya) ** 2 / (2.0 * ell**2), axis=1)
        )
    elif kernel.family == "matern_half":
        ell = kernel.per_dim(kernel.lengthscale, d)
        out = kernel.scale * np.exp(-np.sum(np.abs(xa - ya) / ell, axis=1))
    else:  # bernoulli_lattice
        gam = kernel.per_dim(kernel.gamma, d)
        frac = (xa - ya) % 1.0
        out = kernel.scale * np.prod(1.0 + gam * _bernoulli2(frac), axis=1)
    return out if out.size > 1 else float(out[0])


def gram(kernel: Kernel, X: np.ndarray, with_nugget: bool = True) -> np.ndarray:
    """Gram matrix on design rows, nugget-augmented on the diagonal.

    For unit-diagonal stationary families the diagonal equals
    ``scale * (1 + nugget)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if kernel.family == "brownian":
        if d != 1:
            raise ValueError("brownian kernel is d=1 only")
        K = kernel.scale * np.minimum(X[:, 0][:, None], X[:, 0][None, :])
    elif kernel.family == "squared_exponential":
        ell = kernel.per_dim(kernel.lengthscale, d)
        sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2 / (2.0 * ell**2), axis=2)
        K = kernel.scale * np.exp(-sq)
    elif kernel.family == "matern_half":
        ell = kernel.per_dim(kernel.lengthscale, d)
        ab = np.sum(np.abs(X[:, None, :] - X[None, :, :]) / ell, axis=2)
        K = kernel.scale * np.exp(-ab)
    else:
        gam = kernel.per_dim(kernel.gamma, d)
        frac = (X[:, None, :] - X[None, :, :]) % 1.0
        K = kernel.scale * np.prod(1.0 + gam * _bernoulli2(frac), axis=2)
    if with_nugget and n > 0:
        K[np.diag_indices(n)] += kernel.nugget * float(np.mean(np.diag(K)))
    return K


def kernel_means(kernel: Kernel, design) -> KernelMeans:
    """Closed-form kernel means against the uniform measure on [0,1]^d.

    Multivariate values are products of the per-dimension factors.  Each
    closed form is oracle-checked against adaptive quadrature in the tests.
    """
    X = design.points if hasattr(design, "points") else np.atleast_2d(design)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if kernel.family == "brownian":
        if d != 1:
            raise ValueError("brownian kernel is d=1 only")
        x = X[:, 0]
        return KernelMeans(kernel.scale * (x - 0.5 * x * x), kernel.scale / 3.0)
    if kernel.family == "bernoulli_lattice":
        # B2 integrates to zero over a full period, so z is identically
        # scale and the double integral is scale as well.
        return KernelMeans(np.full(n, kernel.scale), kernel.scale)
    ell = kernel.per_dim(kernel.lengthscale, d)
    if kernel.family == "matern_half":
        zf = ell * (2.0 - np.exp(-X / ell) - np.exp(-(1.0 - X) / ell))
        kf = 2.0 * ell * (1.0 - ell * (1.0 - np.exp(-1.0 / ell)))
    else:  # squared_exponential
        r = ell * math.sqrt(2.0)
        zf = (
            _SQRT_HALF_PI
            * ell
            * (erf((1.0 - X) / r) + erf(X / r))
        )
        kf = np.sqrt(2.0 * np.pi) * ell * erf(1.0 / r) + 2.0 * ell**2 * (
            np.exp(-1.0 / (2.0 * ell**2)) - 1.0
        )
    z = kernel.scale * np.prod(zf, axis=1)
    return KernelMeans(z, kernel.scale * float(np.prod(kf)))


# --- solves -------------------------------------------------------------------


@dataclass
class SolveInfo:
    """Diagnostics attached to a linear solve."""

    flops: float
    nugget_added: float = 0.0
    escalations: int = 0
    floored_modes: int = 0


def chol_factor_with_escalation(
    K: np.ndarray, start: float = NUGGET_DEFAULT, cap: float = NUGGET_CAP
):
    """Cholesky factor of K, escalating a relative diagonal nugget on failure.

    The matrix is assumed to already carry its base nugget; escalation adds
    ``nu * mean(diag)`` for nu = start*10, start*100, ..., cap, then raises
    :class:`FactorizationError`.
    """
    diag_mean = float(np.mean(np.diag(K))) if K.size else 0.0
    added, escalations = 0.0, 0
    nu = start
    while True:
        try:
            c, low = scipy.linalg.cho_factor(K + added * diag_mean * np.eye(K.shape[0]))
            return (c, low), SolveInfo(flops=K.shape[0] ** 3 / 3.0,
                                       nugget_added=added * diag_mean,
                                       escalations=escalations)
        except scipy.linalg.LinAlgError:
            nu *= 10.0
            if nu > cap * (1.0 + 1e-12):
                raise FactorizationError(
                    f"matrix of order {K.shape[0]} not positive definite after "
                    f"nugget escalation to {cap:g}"
                ) from None
            added = nu
            escalations += 1


def dense_solve(K_with_nugget: np.ndarray, rhs: np.ndarray):
    """Solve a symmetric positive-definite system.

    Returns ``(solution, SolveInfo)``.  The model flop count is
    n^3/3 for the factorization plus 2 n^2 per right-hand side.
    """
    K = np.asarray(K_with_nugget, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = K.shape[0]
    nrhs = 1 if rhs.ndim == 1 else rhs.shape[1]
    factor, info = chol_factor_with_escalation(K)
    x = scipy.linalg.cho_solve(factor, rhs)
    info.flops = n**3 / 3.0 + 2.0 * n * n * nrhs
    return x, info


CIRCULANT_FLOOR = 1e-12


def circulant_solve(first_row: np.ndarray, rhs: np.ndarray):
    """Solve C x = rhs for a symmetric circulant matrix by FFT diagonalization.

    ``first_row`` is row 0 of C, i.e. C[i, j] = first_row[(j - i) mod n].
    Eigenvalues below ``CIRCULANT_FLOOR`` times the largest are treated as
    zero (pseudo-inverse convention); the count of floored modes is reported
    rather than hidden.  Model flop count: three length-n FFTs at
    5 n log2 n each, plus O(n).
    """
    c = np.asarray(first_row, dtype=float)
    b = np.asarray(rhs, dtype=float)
    n = c.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"rhs length {b.shape[0]} does not match order {n}")
    lam = np.real(np.fft.fft(c))
    lam_max = float(np.max(np.abs(lam))) if n else 0.0
    keep = np.abs(lam) > CIRCULANT_FLOOR * lam_max
    inv_lam = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    if b.ndim == 1:
        x = np.real(np.fft.ifft(np.fft.fft(b) * inv_lam))
    else:
        x = np.real(np.fft.ifft(np.fft.fft(b, axis=0) * inv_lam[:, None], axis=0))
    log2n = math.log2(n) if n > 1 else 1.0
    info = SolveInfo(
        flops=3.0 * (5.0 * n * log2n) + 2.0 * n,
        floored_modes=int(np.sum(~keep)),
    )
    return x, info


# --- empirical Bayes ----------------------------------------------------------


def eb_scale(y: np.ndarray, K0_with_nugget: np.ndarray) -> float:
    """Profile maximum-likelihood scale: y' K0^-1 y / n for unit-scale K0."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty observation vector")
    alpha, _ = dense_solve(K0_with_nugget, y)
    return float(y @ alpha) / n


DEFAULT_LENGTHSCALE_GRID = tuple(np.geomspace(0.05, 2.0, 16))


def profile_ml_lengthscale(
    design,
    y: np.ndarray,
    family: str,
    grid=DEFAULT_LENGTHSCALE_GRID,
    nugget: float = NUGGET_DEFAULT,
):
    """Grid-profiled marginal likelihood over the lengthscale.

    Maximizes -(n/2) log sigma2(ell) - (1/2) log det K0(ell) over the grid,
    with the scale profiled out in closed form.  Ties break toward the
    smaller lengthscale; grid points whose Gram cannot be factorized are
    skipped, and all of them failing is an error.
    """
    X = design.points if hasattr(design, "points") else np.atleast_2d(design)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty lengthscale grid")
    best = None
    for ell in sorted(grid):
        k0 = Kernel(family, lengthscale=ell, scale=1.0, nugget=nugget)
        try:
            factor, _ = chol_factor_with_escalation(gram(k0, X))
        except FactorizationError:
            continue
        alpha = scipy.linalg.cho_solve(factor, y)
        s2 = float(y @ alpha) / n
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        ll = -0.5 * n * math.log(max(s2, 1e-300)) - 0.5 * logdet
        if best is None or ll > best[0] + 1e-12:
            best = (ll, ell, s2)
    if best is None:
        raise FactorizationError("no lengthscale on the grid could be factorized")
    return best[1], best[2]
