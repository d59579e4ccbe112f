"""Point sets in [0,1)^d.

Generators (IID, base-2 digital sequence, rank-1 lattice), randomizations
(shift mod 1, digital shift, nested scramble), and the quality measures
needed for worst-case error bounds: exact star discrepancy in d=1 and d=2
and total variation in d=1.
"""

from __future__ import annotations

import functools
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .rng import RngStream, splitmix64

DIGIT_BITS = 32
_DIGIT_SCALE = float(1 << DIGIT_BITS)
MAX_TABLE_DIM = 50
DISCREPANCY_2D_CAP = 512

GENERATORS = ("iid", "sobol", "lattice")
RANDOMIZATIONS = ("none", "shift_mod1", "digital_shift", "nested_scramble")

# Which randomizations preserve each generator's structure.
_COMPATIBLE = {
    "lattice": ("shift_mod1",),
    "sobol": ("digital_shift", "nested_scramble"),
    "iid": ("shift_mod1", "digital_shift", "nested_scramble"),
}


class UnsupportedDimensionError(ValueError):
    """Requested dimension exceeds the embedded direction-number table."""


class IncompatibleRandomizationError(ValueError):
    """Randomization kind does not preserve the generator's structure."""


@dataclass(frozen=True)
class PointSet:
    """n points in [0,1)^d plus the metadata needed to regenerate them.

    Regenerating with identical (generator, randomization, seed, stream_id,
    n, d) is bit-identical.  Duplicate points are allowed; the discrepancy
    routines count multiplicity.
    """

    points: np.ndarray
    generator: str
    randomization: str = "none"
    seed: int = 0
    stream_id: int = 0
    gen_vector: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts = np.ascontiguousarray(pts)
        if pts.ndim != 2 or pts.shape[1] == 0:
            raise ValueError("points must be an (n, d) array with d >= 1")
        if pts.size and (
            np.any(~np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts >= 1.0)
        ):
            raise ValueError("every coordinate must lie in [0, 1)")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.randomization not in RANDOMIZATIONS:
            raise ValueError(f"unknown randomization {self.randomization!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self) -> str:
        """CSV dump with a metadata comment header."""
        head = (
            f"# generator={self.generator}, randomization={self.randomization}, "
            f"seed={self.seed}, n={self.n}, d={self.d}"
        )
        if self.stream_id:
            head += f", stream_id={self.stream_id}"
        if self.gen_vector is not None:
            head += ", gen_vector=" + ":".join(str(g) for g in self.gen_vector)
        rows = [",".join(repr(v) for v in row) for row in self.points]
        return head + "\n" + "\n".join(rows) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def iid_points(n: int, d: int, stream: RngStream) -> PointSet:
    """n IID uniform points, drawn sequentially from the stream."""
    _check_nd(n, d)
    pts = stream.generator().random((n, d))
    return PointSet(pts, "iid", seed=stream.seed, stream_id=stream.stream_id)


# --- base-2 digital sequence ------------------------------------------------


def _table_path() -> str:
    override = os.environ.get("UQBENCH_DIRECTION_NUMBERS")
    if override:
        return override
    return str(resources.files("uqbench").joinpath("data/joe_kuo_d6_50.txt"))


@functools.lru_cache(maxsize=4)
def _load_direction_rows(path: str) -> dict[int, tuple[int, int, tuple[int, ...]]]:
    rows: dict[int, tuple[int, int, tuple[int, ...]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or not line[0].isdigit():
                continue
            parts = line.split()
            d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
            m = tuple(int(x) for x in parts[3 : 3 + s])
            if len(m) != s:
                raise ValueError(f"direction-number row for d={d} is truncated")
            rows[d] = (s, a, m)
    return rows


@functools.lru_cache(maxsize=64)
def _direction_integers(d: int) -> np.ndarray:
    """Direction integers v[dim, bit], bits 1..DIGIT_BITS, MSB-aligned."""
    rows = _load_direction_rows(_table_path())
    max_dim = max(rows) if rows else 1
    if d > max_dim:
        raise UnsupportedDimensionError(
            f"dimension {d} exceeds the direction-number table (max {max_dim}); "
            "extend the table file or set UQBENCH_DIRECTION_NUMBERS"
        )
    v = np.zeros((d, DIGIT_BITS), dtype=np.uint64)
    for dim in range(1, d + 1):
        if dim == 1:
            for k in range(1, DIGIT_BITS + 1):
                v[0, k - 1] = 1 << (DIGIT_BITS - k)
            continue
        s, a, m = rows[dim]
        col = np.zeros(DIGIT_BITS + 1, dtype=np.uint64)
        for k in range(1, min(s, DIGIT_BITS) + 1):
            col[k] = m[k - 1] << (DIGIT_BITS - k)
        for k in range(s + 1, DIGIT_BITS + 1):
            vk = int(col[k - s]) ^ (int(col[k - s]) >> s)
            for j in range(1, s):
                if (a >> (s - 1 - j)) & 1:
                    vk ^= int(col[k - j])
            col[k] = vk
        v[dim - 1] = col[1:]
    return v


def _sobol_integers(n: int, d: int) -> np.ndarray:
    """First n states of the Gray-code-ordered sequence as 32-bit integers."""
    v = _direction_integers(d)
    idx = np.arange(n, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    x = np.zeros((n, d), dtype=np.uint64)
    for b in range(max(n - 1, 1).bit_length()):
        mask = (gray >> np.uint64(b)) & np.uint64(1) == 1
        if mask.any():
            x[mask] ^= v[:, b]
    return x


def sobol_points(n: int, d: int) -> PointSet:
    """First n points of the base-2 digital sequence (Joe-Kuo directions).

    Gray-code ordering: any power-of-two prefix forms a (t, m, d)-net in
    base 2, and ``sobol_points(n, d)`` is always a prefix of
    ``sobol_points(2n, d)``.
    """
    _check_nd(n, d)
    pts = _sobol_integers(n, d) / _DIGIT_SCALE
    return PointSet(pts, "sobol")


# --- rank-1 lattice -----------------------------------------------------------


def lattice_points(n: int, gen_vector) -> PointSet:
    """Rank-1 lattice: point j has coordinates frac(j * g_k / n), j = 0..n-1.

    Index order is preserved; the circulant fast solve relies on it.
    """
    g = tuple(int(v) for v in np.atleast_1d(gen_vector))
    _check_nd(n, len(g))
    for gk in g:
        if n > 1 and math.gcd(gk % n, n) > 1:
            warnings.warn(
                f"generator entry {gk} shares a factor with n={n}; "
                "the lattice does not project uniformly in that coordinate",
                stacklevel=2,
            )
    j = np.arange(n, dtype=np.int64)
    pts = ((j[:, None] * np.array(g, dtype=np.int64)[None, :]) % n) / float(n)
    return PointSet(pts, "lattice", gen_vector=g)


@functools.lru_cache(maxsize=128)
def korobov_vector(n: int, d: int, a: int | None = None) -> tuple[int, ...]:
    """Korobov generating vector (1, a, a^2, ...) mod n.

    When ``a`` is not given, it is chosen by exhaustive search over residues
    coprime with n, minimizing the shift-invariant product-kernel worst-case
    criterion sum_j prod_k (1 + B2({j a^{k-1} / n})) with B2 the degree-2
    Bernoulli polynomial.
    """
    if d == 1:
        return (1,)
    if a is not None:
        return tuple(pow(a, k, n) for k in range(d))
    cands = np.array([c for c in range(1, n) if math.gcd(c, n) == 1], dtype=np.int64)
    if cands.size == 0:
        return tuple(1 for _ in range(d))
    j = np.arange(n, dtype=np.int64)
    best_a, best_val = 1, np.inf
    for lo in range(0, cands.size, 64):
        chunk = cands[lo : lo + 64]
        prod = np.ones((chunk.size, n))
        power = np.ones_like(chunk)
        for _ in range(1, d):
            power = (power * chunk) % n
            t = ((j[None, :] * power[:, None]) % n) / float(n)
            prod *= 1.0 + (t * t - t + 1.0 / 6.0)
        vals = prod.sum(axis=1)
        k = int(np.argmin(vals))
        if vals[k] < best_val - 1e-12:
            best_val, best_a = float(vals[k]), int(chunk[k])
    return tuple(pow(best_a, k, n) for k in range(d))


# --- randomization ------------------------------------------------------------


def randomize(ps: PointSet, kind: str, stream: RngStream) -> PointSet:
    """Independently randomized copy of a point set.

    Each randomized point is marginally uniform on [0,1)^d.  Shifts preserve
    lattice structure exactly, digital shifts preserve digital-net structure
    exactly, and the nested scramble preserves it in distribution.
    """
    if kind not in RANDOMIZATIONS:
        raise ValueError(f"unknown randomization {kind!r}")
    if kind == "none":
        return ps
    if ps.generator == "iid":
        warnings.warn("randomizing IID points is a no-op", stacklevel=2)
        return ps
    if kind not in _COMPATIBLE[ps.generator]:
        raise IncompatibleRandomizationError(
            f"{kind} is not compatible with {ps.generator} points"
        )
    gen = stream.generator()
    if kind == "shift_mod1":
        shift = gen.random(ps.d)
        pts = (ps.points + shift) % 1.0
    elif kind == "digital_shift":
        shift = gen.integers(0, 1 << DIGIT_BITS, size=ps.d, dtype=np.uint64)
        pts = (_as_digits(ps.points) ^ shift[None, :]) / _DIGIT_SCALE
    else:  # nested_scramble
        keys = gen.integers(0, 1 << 63, size=ps.d, dtype=np.uint64)
        ints = _as_digits(ps.points)
        out = np.zeros_like(ints)
        for dim in range(ps.d):
            out[:, dim] = _owen_scramble_column(ints[:, dim], int(keys[dim]))
        pts = out / _DIGIT_SCALE
    return replace(
        ps,
        points=pts,
        randomization=kind,
        seed=stream.seed,
        stream_id=stream.stream_id,
    )


def _as_digits(points: np.ndarray) -> np.ndarray:
    """Exact 32-bit digit expansion; digital points round-trip losslessly."""
    return np.floor(points * _DIGIT_SCALE).astype(np.uint64)


def _splitmix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _owen_scramble_column(ints: np.ndarray, key: int) -> np.ndarray:
    """Nested uniform scramble of one coordinate at 32-bit depth.

    Bit j of each point is flipped by a pseudorandom function of the first
    j-1 bits, so points sharing a digit prefix receive the same flips: the
    scramble acts on dyadic intervals exactly as a random permutation tree.
    """
    out = np.zeros_like(ints)
    key64 = np.uint64(key)
    for j in range(1, DIGIT_BITS + 1):
        prefix = ints >> np.uint64(DIGIT_BITS + 1 - j)
        h = _splitmix64_vec(
            key64 ^ _splitmix64_vec(prefix + np.uint64(splitmix64(j)))
        ) & np.uint64(1)
        bit = (ints >> np.uint64(DIGIT_BITS - j)) & np.uint64(1)
        out |= (bit ^ h) << np.uint64(DIGIT_BITS - j)
    return out


# --- quality measures ---------------------------------------------------------


def star_discrepancy_1d(ps: PointSet) -> float:
    """Exact star discrepancy for d=1 via the sorted closed form."""
    if ps.d != 1:
        raise ValueError("star_discrepancy_1d requires d=1")
    if ps.n == 0:
        raise ValueError("point set is empty")
    x = np.sort(ps.points[:, 0])
    n = x.size
    anchors = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    return 1.0 / (2.0 * n) + float(np.max(np.abs(x - anchors)))


def star_discrepancy_2d(ps: PointSet, cap: int = DISCREPANCY_2D_CAP) -> float:
    """Exact star discrepancy for d=2 by enumerating critical anchor boxes.

    Candidate box corners are point coordinates and 1, with both open and
    closed counting at the corner; O(n^3) work, so n is capped.
    """
    if ps.d != 2:
        raise ValueError("star_discrepancy_2d requires d=2")
    if ps.n > cap:
        raise ValueError(
            f"n={ps.n} exceeds the exact-enumeration cap ({cap}); use d=1, "
            "or compare methods without discrepancy bounds at this size"
        )
    x, y = ps.points[:, 0], ps.points[:, 1]
    ax = np.unique(np.concatenate([x, [1.0]]))
    by = np.unique(np.concatenate([y, [1.0]]))
    n = float(ps.n)
    x_lt = (x[:, None] < ax[None, :]).astype(float)
    y_lt = (y[:, None] < by[None, :]).astype(float)
    x_le = (x[:, None] <= ax[None, :]).astype(float)
    y_le = (y[:, None] <= by[None, :]).astype(float)
    open_frac = (x_lt.T @ y_lt) / n
    closed_frac = (x_le.T @ y_le) / n
    vol = ax[:, None] * by[None, :]
    return float(max(np.max(vol - open_frac), np.max(closed_frac - vol)))


def hk_variation_1d(
    f,
    grid_size: int = 1024,
    max_grid: int = 1 << 20,
    rel_tol: float = 1e-6,
) -> float:
    """Total variation of f on [0,1], by grid refinement.

    The grid sum of |f(t_{k+1}) - f(t_k)| increases under refinement and
    converges to the total variation from below; refinement stops when the
    relative change drops under ``rel_tol`` or the grid cap is reached.
    Exact for monotone f.
    """
    fn = f.fn if hasattr(f, "fn") else f
    prev = None
    m = grid_size
    while True:
        t = np.linspace(0.0, 1.0, m + 1)
        vals = np.asarray(fn(t[:, None]), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = t[int(np.argmax(~np.isfinite(vals)))]
            raise ValueError(f"integrand is non-finite at x={bad!r}")
        tv = float(np.sum(np.abs(np.diff(vals))))
        if prev is not None and (tv - prev) <= rel_tol * max(tv, 1e-300):
            return tv
        if m >= max_grid:
            return tv
        prev = tv
        m *= 2


def _check_nd(n: int, d: int) -> None:
    if int(n) < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if int(d) < 1:
        raise ValueError(f"d must be >= 1, got {d}")
