"""Exact-in-distribution simulation of class-C diffusion increments.

A class-C process has covolatility Theta_t = gamma_t * Lambda with a
deterministic scalar profile gamma and a fixed loading matrix Lambda
normalized so tr(Lambda Lambda^T) = p. Over an observation interval the
increment is then Gaussian with known variance, so sampling draws

    dX_l = mu * dtau_l + sqrt(integral of gamma^2 over the interval) * Lambda z_l

with z_l i.i.d. standard normal vectors. No Euler stepping, hence no
discretization bias.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import BadGridError, BadSpecError, NonFiniteError, OutOfDomainError

# Bound on n * max interval length for observation grids (random grids are
# redrawn until they satisfy it).
MAX_RESCALED_SPACING = 10.0

# Bound on per-coordinate constant drift magnitudes.
DRIFT_BOUND = 10.0

# Panels for composite Simpson when a profile has no closed-form integral.
SIMPSON_PANELS = 64

_COMPARATOR_SALT = 0xC3A5C85C97CB3127


class VolatilityProfile:
    """Deterministic scalar volatility path t -> gamma_t on [0, 1], gamma_t > 0."""

    def gamma_sq(self, t):
        """gamma_t^2, vectorized over t."""
        raise NotImplementedError

    def gamma(self, t):
        return np.sqrt(self.gamma_sq(t))

    def interval_integrals(self, times: np.ndarray) -> np.ndarray:
        """Integrals of gamma^2 over consecutive intervals of ``times``."""
        raise NotImplementedError

    def total_variance(self) -> float:
        """Integral of gamma^2 over [0, 1]."""
        return float(self.interval_integrals(np.array([0.0, 1.0]))[0])

    def descriptor(self) -> bytes:
        """Canonical bytes identifying the profile, for digests."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantProfile(VolatilityProfile):
    """gamma_t = sigma."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise BadSpecError(f"constant profile needs sigma > 0, got {self.sigma}")

    def gamma_sq(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.sigma**2)

    def interval_integrals(self, times):
        return self.sigma**2 * np.diff(np.asarray(times, dtype=float))

    def descriptor(self):
        return b"constant:" + np.float64(self.sigma).tobytes()


@dataclass(frozen=True, eq=False)
class PiecewiseProfile(VolatilityProfile):
    """Piecewise-constant gamma: value levels[k] on [edges[k], edges[k+1])."""

    edges: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).ravel()
        levels = np.asarray(self.levels, dtype=float).ravel()
        if edges.size < 2 or levels.size != edges.size - 1:
            raise BadSpecError(
                f"need m+1 edges for m levels, got {edges.size} and {levels.size}"
            )
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise BadSpecError("edges must increase strictly from 0 to 1")
        if not np.all(np.isfinite(levels)) or np.any(levels <= 0):
            raise BadSpecError("gamma levels must be positive and finite")
        edges.setflags(write=False)
        levels.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "levels", levels)
        cum = np.concatenate([[0.0], np.cumsum(levels**2 * np.diff(edges))])
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_pairs(cls, pairs) -> "PiecewiseProfile":
        """Build from [(t_k, gamma_k)] where gamma_k applies from t_k onward."""
        pairs = sorted((float(t), float(g)) for t, g in pairs)
        if not pairs or pairs[0][0] != 0.0:
            raise BadSpecError("piecewise pairs must start at t=0")
        times = [t for t, _ in pairs] + [1.0]
        return cls(np.asarray(times), np.asarray([g for _, g in pairs]))

    def _segment(self, t):
        idx = np.searchsorted(self.edges, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.levels.size - 1)

    def gamma_sq(self, t):
        return self.levels[self._segment(t)] ** 2

    def _cum_gamma_sq(self, t):
        t = np.asarray(t, dtype=float)
        k = self._segment(t)
        return self._cum[k] + self.levels[k] ** 2 * (t - self.edges[k])

    def interval_integrals(self, times):
        return np.diff(self._cum_gamma_sq(np.asarray(times, dtype=float)))

    def descriptor(self):
        return b"piecewise:" + self.edges.tobytes() + b"|" + self.levels.tobytes()


@dataclass(frozen=True)
class CosineProfile(VolatilityProfile):
    """gamma_t^2 = c0 + c1 * cos(2 pi t); requires c0 > |c1| for positivity."""

    c0: float
    c1: float

    def __post_init__(self):
        if not (np.isfinite(self.c0) and np.isfinite(self.c1)):
            raise BadSpecError("cosine coefficients must be finite")
        if self.c0 <= abs(self.c1):
            raise BadSpecError(
                f"cosine profile needs c0 > |c1| to keep gamma > 0, "
                f"got c0={self.c0}, c1={self.c1}"
            )

    def gamma_sq(self, t):
        return self.c0 + self.c1 * np.cos(2 * np.pi * np.asarray(t, dtype=float))

    def _cum_gamma_sq(self, t):
        t = np.asarray(t, dtype=float)
        return self.c0 * t + self.c1 * np.sin(2 * np.pi * t) / (2 * np.pi)

    def interval_integrals(self, times):
        return np.diff(self._cum_gamma_sq(np.asarray(times, dtype=float)))

    def descriptor(self):
        return b"cosine:" + np.float64(self.c0).tobytes() + np.float64(self.c1).tobytes()


@dataclass(frozen=True, eq=False)
class SampledProfile(VolatilityProfile):
    """gamma sampled on a uniform grid over [0, 1], linearly interpolated.

    Integrals use composite Simpson with at least SIMPSON_PANELS panels per
    requested interval (relative error target 1e-8 for smooth profiles).
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size < 2:
            raise BadSpecError("sampled profile needs at least two samples")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise BadSpecError("sampled gamma values must be positive and finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        grid = np.linspace(0.0, 1.0, vals.size)
        grid.setflags(write=False)
        object.__setattr__(self, "_grid", grid)

    def gamma_sq(self, t):
        return np.interp(np.asarray(t, dtype=float), self._grid, self.values) ** 2

    def interval_integrals(self, times):
        times = np.asarray(times, dtype=float)
        a, b = times[:-1], times[1:]
        k = np.arange(SIMPSON_PANELS + 1)
        nodes = a[:, None] + (b - a)[:, None] * (k[None, :] / SIMPSON_PANELS)
        f = self.gamma_sq(nodes.ravel()).reshape(nodes.shape)
        w = np.ones(SIMPSON_PANELS + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        h = (b - a) / SIMPSON_PANELS
        return h / 3.0 * (f * w[None, :]).sum(axis=1)

    def descriptor(self):
        return b"sampled:" + self.values.tobytes()


def design_one_profile(a: float = 7.0, b: float = 1.0) -> PiecewiseProfile:
    """Two-level step profile: gamma^2 = a*1e-4 on [0,1/4) and [3/4,1], b*1e-4 between."""
    if a <= 0 or b <= 0:
        raise BadSpecError(f"step levels must be positive, got a={a}, b={b}")
    lo, hi = np.sqrt(b * 1e-4), np.sqrt(a * 1e-4)
    return PiecewiseProfile(
        np.array([0.0, 0.25, 0.75, 1.0]), np.array([hi, lo, hi])
    )


def design_two_profile(c0: float = 9e-4, c1: float = 8e-4) -> CosineProfile:
    """Smooth seasonal profile gamma_t = sqrt(c0 + c1 cos(2 pi t))."""
    return CosineProfile(c0, c1)


def integrate_gamma_sq(profile: VolatilityProfile, a: float, b: float) -> float:
    """Integral of gamma_t^2 over [a, b] within [0, 1]."""
    if not (0.0 <= a <= b <= 1.0):
        raise OutOfDomainError(f"need 0 <= a <= b <= 1, got [{a}, {b}]")
    if a == b:
        return 0.0
    return float(profile.interval_integrals(np.array([a, b]))[0])


@dataclass(frozen=True, eq=False)
class ObservationGrid:
    """Observation times 0 = tau_0 < tau_1 < ... < tau_n = 1."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size < 2:
            raise BadGridError("grid needs at least two times")
        if not np.all(np.isfinite(t)):
            raise BadGridError("grid times must be finite")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise BadGridError(f"grid must start at 0 and end at 1, got [{t[0]}, {t[-1]}]")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise BadGridError("grid times must be strictly increasing")
        n = t.size - 1
        worst = float(n * dt.max())
        if worst > MAX_RESCALED_SPACING:
            raise BadGridError(
                f"max interval too long: n*dtau = {worst:.3f} > {MAX_RESCALED_SPACING}"
            )
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return self.times.size - 1

    def spacings(self) -> np.ndarray:
        return np.diff(self.times)


def make_grid(kind: str, n: int, seed: int | None = None) -> ObservationGrid:
    """Build an observation grid with n intervals.

    ``equispaced`` puts tau_l = l/n. ``poisson`` draws the interior points as
    sorted uniforms (order statistics), redrawing until the longest interval
    satisfies n * dtau <= MAX_RESCALED_SPACING.
    """
    if n < 1:
        raise BadGridError(f"need n >= 1 intervals, got {n}")
    if kind == "equispaced":
        return ObservationGrid(np.arange(n + 1) / n)
    if kind == "poisson":
        rng = np.random.default_rng(np.random.Philox(key=_key64(seed or 0)))
        while True:
            interior = np.sort(rng.random(n - 1))
            times = np.concatenate([[0.0], interior, [1.0]])
            dt = np.diff(times)
            if np.all(dt > 0) and n * dt.max() <= MAX_RESCALED_SPACING:
                return ObservationGrid(times)
    raise BadGridError(f"unknown grid kind {kind!r}")


def _key64(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)):
        raise BadSpecError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True, eq=False)
class ClassCSpec:
    """Parameters of a class-C diffusion.

    ``lam`` is the p x p loading matrix Lambda; it is rescaled at construction
    so tr(Lambda Lambda^T) = p (a normalization convention, not a user
    burden). ``lam=None`` means the identity. ``drift`` is a per-coordinate
    constant (scalar or length-p vector) with magnitudes bounded by
    DRIFT_BOUND.
    """

    p: int
    profile: VolatilityProfile
    lam: np.ndarray | None = None
    drift: float | np.ndarray = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise BadSpecError(f"need p >= 1, got {self.p}")
        if not isinstance(self.profile, VolatilityProfile):
            raise BadSpecError("profile must be a VolatilityProfile")
        _key64(self.seed)
        if self.lam is not None:
            lam = np.asarray(self.lam, dtype=float)
            if lam.shape != (self.p, self.p):
                raise BadSpecError(
                    f"lambda must be {self.p}x{self.p}, got shape {lam.shape}"
                )
            if not np.all(np.isfinite(lam)):
                raise NonFiniteError("lambda contains NaN or infinite entries")
            sq = float(np.sum(lam * lam))
            if sq <= 0.0:
                raise BadSpecError("lambda must be nonzero")
            lam = lam * np.sqrt(self.p / sq)
            lam.setflags(write=False)
            object.__setattr__(self, "lam", lam)
            diag = np.diagonal(lam)
            offdiag_zero = np.count_nonzero(lam) == np.count_nonzero(diag)
            object.__setattr__(self, "_lam_diag", diag if offdiag_zero else None)
        else:
            object.__setattr__(self, "_lam_diag", None)
        drift = self.drift
        if np.ndim(drift) == 0:
            drift = float(drift)
        else:
            drift = np.asarray(drift, dtype=float).ravel()
            if drift.size != self.p:
                raise BadSpecError(f"drift must be scalar or length {self.p}")
            drift = drift.copy()
            drift.setflags(write=False)
        if np.any(np.abs(drift) > DRIFT_BOUND) or not np.all(np.isfinite(drift)):
            raise BadSpecError(f"drift magnitudes must be <= {DRIFT_BOUND} and finite")
        object.__setattr__(self, "drift", drift)

    def digest(self, grid: ObservationGrid, tag: str = "simulate") -> str:
        h = hashlib.sha256()
        h.update(tag.encode())
        h.update(np.int64(self.p).tobytes())
        h.update(np.uint64(_key64(self.seed)).tobytes())
        h.update(self.profile.descriptor())
        h.update(b"identity" if self.lam is None else self.lam.tobytes())
        drift = np.asarray(self.drift, dtype=float)
        h.update(drift.tobytes())
        h.update(grid.times.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class IncrementMatrix:
    """Observed increments: row l holds dX_l^T, one column per coordinate."""

    increments: np.ndarray
    grid: ObservationGrid
    spec_digest: str = ""

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2:
            raise BadSpecError(f"increments must be 2-d, got shape {inc.shape}")
        if inc.shape[0] != self.grid.n:
            raise BadSpecError(
                f"row count {inc.shape[0]} does not match grid intervals {self.grid.n}"
            )
        if not np.all(np.isfinite(inc)):
            raise NonFiniteError("increments contain NaN or infinite entries")
        inc = inc.copy() if inc.base is not None or inc.flags.writeable else inc
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n(self) -> int:
        return self.increments.shape[0]

    @property
    def p(self) -> int:
        return self.increments.shape[1]


def _draw(spec: ClassCSpec, grid: ObservationGrid, profile: VolatilityProfile,
          drift, key: int, tag: str) -> IncrementMatrix:
    w = profile.interval_integrals(grid.times)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise BadSpecError("profile produced nonpositive interval variances")
    rng = np.random.default_rng(np.random.Philox(key=key))
    z = rng.standard_normal((grid.n, spec.p))
    lam_diag = getattr(spec, "_lam_diag", None)
    if spec.lam is None:
        y = z
    elif lam_diag is not None:
        y = z * lam_diag[None, :]
    else:
        y = z @ spec.lam.T
    incr = np.sqrt(w)[:, None] * y
    if np.any(np.asarray(drift) != 0.0):
        incr = incr + grid.spacings()[:, None] * np.broadcast_to(
            np.asarray(drift, dtype=float), (spec.p,)
        )[None, :]
    return IncrementMatrix(incr, grid, spec.digest(grid, tag))


def simulate_increments(spec: ClassCSpec, grid: ObservationGrid) -> IncrementMatrix:
    """Draw the n x p increment matrix of the class-C process on the grid.

    Deterministic given (spec, grid): the generator is counter-based and keyed
    by the spec seed only.
    """
    return _draw(spec, grid, spec.profile, spec.drift, _key64(spec.seed), "simulate")


def comparator_increments(spec: ClassCSpec, grid: ObservationGrid) -> IncrementMatrix:
    """Increments of the constant-covolatility comparator process.

    Replaces gamma_t by the constant (integral of gamma^2)^{1/2}, drops the
    drift, and uses a fresh Brownian stream. The comparator has the same ICV
    matrix as the original process by construction.
    """
    sigma_bar = np.sqrt(spec.profile.total_variance())
    const = ConstantProfile(float(sigma_bar))
    key = _key64(spec.seed) ^ _COMPARATOR_SALT
    return _draw(spec, grid, const, 0.0, key, "comparator")
