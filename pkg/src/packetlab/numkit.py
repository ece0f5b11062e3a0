"""Shared numerical substrate.

Unit vectors, reproducible counter-based random streams, adaptive
quadrature, log-space binomial coefficients, sampled 1-D functions and
their position/wavenumber widths.

Everything is desk scale on purpose. The quadrature is a plain adaptive
Simpson rule and the wavenumber moments use the direct O(N^2) discrete
transform, so there is no dependence on transform libraries and no
surprise about what was actually computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import gammaln

from .errors import DomainError, NumericalError, PreconditionError

__all__ = [
    "UnitVector3",
    "RandomStream",
    "SampledFunction1D",
    "sample_isotropic_direction",
    "sample_isotropic_directions",
    "log_binomial",
    "integrate_1d",
    "fourier_widths",
    "position_width",
    "sampled_gaussian",
]

_UNIT_TOL = 1e-12
_MAX_DFT_POINTS = 4096
_SIMPSON_MAX_DEPTH = 30


@dataclass(frozen=True)
class UnitVector3:
    """A direction on the unit sphere (apparatus axis, spin direction)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > _UNIT_TOL:
            raise PreconditionError(
                f"unit vector norm {n!r} deviates from 1 by more than {_UNIT_TOL}"
            )

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> "UnitVector3":
        n = math.sqrt(x * x + y * y + z * z)
        if n == 0.0:
            raise DomainError("cannot normalize the zero vector")
        return cls(x / n, y / n, z / n)

    @classmethod
    def from_array(cls, arr) -> "UnitVector3":
        a = np.asarray(arr, dtype=float)
        if a.shape != (3,):
            raise PreconditionError("expected exactly three components")
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "UnitVector3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z


class RandomStream:
    """Reproducible stream of variates keyed by (seed, stream_id).

    Built on the counter-based Philox generator, so identical keys give
    identical sequences on every platform and distinct stream ids give
    statistically independent sequences. Monte Carlo shards take the shard
    index as stream_id and can then draw without any coordination.

    ``position`` counts variates delivered to callers, which pins down the
    consumption order documented by each sampler.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise DomainError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        self.position = 0
        self._gen = Generator(Philox(key=np.array([seed, stream_id], dtype=np.uint64)))

    def split(self, stream_id: int) -> "RandomStream":
        """Independent stream with the same seed and a new stream id."""
        return RandomStream(self.seed, stream_id)

    def uniform(self, size=None):
        """Standard uniforms in [0, 1)."""
        out = self._gen.random(size)
        self.position += 1 if size is None else int(np.prod(size))
        return out

    def binomial(self, n, p, size=None):
        out = self._gen.binomial(n, p, size)
        self.position += int(np.size(out))
        return out

    def __repr__(self):
        return (
            f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, "
            f"position={self.position})"
        )


def sample_isotropic_direction(rng: RandomStream) -> UnitVector3:
    """One direction uniform on the sphere, by inverse CDF.

    cos(polar angle) is uniform on [-1, 1] and the azimuth uniform on
    [0, 2pi); exactly two uniforms are consumed, in that order.
    """
    u = rng.uniform(size=2)
    z = 2.0 * u[0] - 1.0
    phi = 2.0 * math.pi * u[1]
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return UnitVector3(s * math.cos(phi), s * math.sin(phi), z)


def sample_isotropic_directions(rng: RandomStream, n: int) -> np.ndarray:
    """(n, 3) array of uniform sphere directions.

    Consumes the same uniforms in the same order as n scalar calls.
    """
    if n <= 0:
        raise DomainError("n must be positive")
    u = rng.uniform(size=2 * n)
    z = 2.0 * u[0::2] - 1.0
    phi = 2.0 * math.pi * u[1::2]
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def log_binomial(n, k):
    """ln C(n, k) through log-gamma.

    k must be a nonnegative integer; n may be real (generalized
    coefficients) but must satisfy n >= k so the coefficient is positive.
    Accepts arrays and broadcasts.
    """
    n_arr = np.asarray(n, dtype=float)
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise DomainError("k must be nonnegative")
    if np.any(k_arr != np.floor(k_arr)):
        raise DomainError("k must be an integer")
    if np.any(n_arr < k_arr):
        raise DomainError("n must be at least k")
    out = gammaln(n_arr + 1.0) - gammaln(k_arr + 1.0) - gammaln(n_arr - k_arr + 1.0)
    if np.isscalar(n) and np.isscalar(k):
        return float(out)
    return out


def integrate_1d(f, a: float, b: float, tol: float = 1e-10):
    """Adaptive Simpson integral of a real or complex function on [a, b].

    The recursion depth is capped at 30; exhausting it raises
    NumericalError rather than returning a silently degraded value.
    """
    if not a < b:
        raise DomainError("integration requires a < b")
    if not tol > 0:
        raise DomainError("tol must be positive")
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, _SIMPSON_MAX_DEPTH)


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0:
        raise NumericalError(
            f"adaptive Simpson did not converge on [{a}, {b}] within depth "
            f"{_SIMPSON_MAX_DEPTH}"
        )
    return _adaptive_simpson(
        f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1
    ) + _adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)


class SampledFunction1D:
    """Complex function sampled on a uniform 1-D grid."""

    __slots__ = ("start", "spacing", "values")

    def __init__(self, start: float, spacing: float, values):
        vals = np.array(values, dtype=complex)
        if vals.ndim != 1:
            raise PreconditionError("values must be a one dimensional sequence")
        if vals.size < 8:
            raise PreconditionError("need at least 8 samples")
        if not spacing > 0:
            raise PreconditionError("spacing must be positive")
        vals.setflags(write=False)
        self.start = float(start)
        self.spacing = float(spacing)
        self.values = vals

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return self.start + self.spacing * np.arange(self.values.size)

    @property
    def end(self) -> float:
        return self.start + self.spacing * (self.values.size - 1)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.spacing)

    def normalized(self) -> "SampledFunction1D":
        nsq = self.norm_sq()
        if nsq <= 0.0:
            raise DomainError("cannot normalize a zero function")
        return SampledFunction1D(self.start, self.spacing, self.values / math.sqrt(nsq))

    def value_at(self, x: float) -> complex:
        """Linear interpolation between grid samples."""
        if x < self.start or x > self.end:
            raise DomainError(f"x={x} lies outside the sampled grid")
        t = (x - self.start) / self.spacing
        i = min(int(t), self.values.size - 2)
        frac = t - i
        return complex((1.0 - frac) * self.values[i] + frac * self.values[i + 1])

    def same_grid(self, other: "SampledFunction1D") -> bool:
        return (
            self.values.size == other.values.size
            and abs(self.start - other.start) <= 1e-12 * max(1.0, abs(self.start))
            and abs(self.spacing - other.spacing) <= 1e-15 * self.spacing
        )


def sampled_gaussian(
    center: float,
    sigma: float,
    start: float,
    spacing: float,
    num: int,
    k0: float = 0.0,
) -> SampledFunction1D:
    """Normalized Gaussian packet with position width sigma and carrier k0.

    psi(x) = (2 pi sigma^2)^(-1/4) exp(-(x-center)^2/(4 sigma^2) + i k0 x)
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    x = start + spacing * np.arange(num)
    env = (2.0 * math.pi * sigma * sigma) ** -0.25 * np.exp(
        -((x - center) ** 2) / (4.0 * sigma * sigma)
    )
    return SampledFunction1D(start, spacing, env * np.exp(1j * k0 * x))


def position_width(psi: SampledFunction1D) -> tuple:
    """(mean, standard deviation) of position under |psi|^2."""
    p = np.abs(psi.values) ** 2 * psi.spacing
    total = p.sum()
    if total <= 0:
        raise DomainError("zero function has no width")
    p = p / total
    x = psi.grid
    mean = float(np.dot(p, x))
    var = float(np.dot(p, (x - mean) ** 2))
    return mean, math.sqrt(max(var, 0.0))


def fourier_widths(psi: SampledFunction1D) -> tuple:
    """Standard deviations of position and wavenumber, (delta_x, delta_k).

    The wavenumber moments come from the direct discrete Fourier transform
    evaluated in row blocks (no FFT). Requires a normalized input with
    negligible boundary amplitude, otherwise the transform samples do not
    represent the continuum function.
    """
    n = psi.n
    if n > _MAX_DFT_POINTS:
        raise PreconditionError(f"direct transform limited to {_MAX_DFT_POINTS} points")
    if abs(psi.norm_sq() - 1.0) > 1e-8:
        raise PreconditionError("input must be normalized to 1 within 1e-8")
    amax = float(np.max(np.abs(psi.values)))
    edge = max(abs(psi.values[0]), abs(psi.values[-1]))
    if amax == 0.0 or edge > 1e-6 * amax:
        raise PreconditionError("boundary amplitude exceeds 1e-6 of the maximum")

    _, delta_x = position_width(psi)

    x = psi.grid
    dx = psi.spacing
    # standard DFT frequencies, written out rather than taken from a library
    j = np.arange(n)
    j_signed = np.where(j < (n + 1) // 2, j, j - n)
    k = 2.0 * math.pi * j_signed / (n * dx)

    weights = np.empty(n)
    block = 256
    for lo in range(0, n, block):
        kb = k[lo : lo + block]
        phases = np.exp(-1j * np.outer(kb, x))
        weights[lo : lo + block] = np.abs(phases @ psi.values) ** 2
    weights /= weights.sum()
    k_mean = float(np.dot(weights, k))
    k_var = float(np.dot(weights, (k - k_mean) ** 2))
    return delta_x, math.sqrt(max(k_var, 0.0))
