"""Equilibrium statistics of quantized wave fields in a cavity.

Mode counting over phase-space cells, the Bose/Fermi/Boltzmann occupancy
laws per cell, spectral distributions, the collision balance identity
that fixes the equilibrium form, Einstein's A/B recovery from the Planck
case, combinatorial entropy with its thermodynamic derivatives, the von
Laue factorization of bundle degrees of freedom, and the counting laws
for quanta seen by an imperfect detector (negative binomial, binomial,
Poisson limit).

SI units: volumes m^3, temperatures K, energies J, momenta kg m/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import h as H_PLANCK
from scipy.constants import k as K_BOLTZMANN
from scipy.special import gammaln

from .errors import (
    AccuracyWarning,
    DomainError,
    NumericalError,
    PreconditionError,
)
from .numkit import log_binomial

__all__ = [
    "Statistics",
    "CavitySpec",
    "ModeBin",
    "OccupancyDistribution",
    "CountDistribution",
    "mode_count",
    "photon_mode_count",
    "photon_bins",
    "occupancy",
    "spectral_distribution",
    "balance_residual",
    "einstein_balance",
    "entropy_and_derivatives",
    "vonlaue_dof",
    "packet_quanta_dist",
    "binomial_pmf",
    "count_distribution",
    "thinned_count_distribution",
    "count_variance",
    "binomial_fold_check",
    "sample_counts",
]

# truncated series bookkeeping: mass and mean deficits kept under these
_TAIL_MASS = 1e-13
_TAIL_MEAN = 1e-13
_MAX_SUPPORT = 10_000_000

# occupancy classes holding fewer packets than this break Stirling
_STIRLING_MIN = 10.0
# classes with less probability than this carry no entropy mass worth guarding
_GUARD_MASS = 1e-9


class Statistics(Enum):
    BOSE = "bose"
    FERMI = "fermi"
    BOLTZMANN = "boltzmann"


def mode_count(volume: float, p: float, dp: float) -> float:
    """Phase-space cells in a momentum shell: 4 pi V p^2 dp / h^3 (one polarization)."""
    if volume <= 0 or p <= 0 or dp <= 0:
        raise DomainError("volume, p and dp must be positive")
    return 4.0 * math.pi * volume * p * p * dp / H_PLANCK**3


def photon_mode_count(volume: float, nu: float, dnu: float) -> float:
    """Photon form of the cell count: 4 pi V nu^2 dnu / c^3 (one polarization)."""
    if volume <= 0 or nu <= 0 or dnu <= 0:
        raise DomainError("volume, nu and dnu must be positive")
    return 4.0 * math.pi * volume * nu * nu * dnu / C_LIGHT**3


@dataclass(frozen=True)
class CavitySpec:
    """Cavity volume, temperature, chemical potential, species."""

    volume: float
    temperature: float
    mu: float
    mass: float
    statistics: Statistics
    photon: bool = False

    def __post_init__(self):
        if self.volume <= 0 or self.temperature <= 0:
            raise DomainError("volume and temperature must be positive")
        if self.mass < 0:
            raise DomainError("mass must be nonnegative")
        if self.photon and (self.mass != 0.0 or self.mu != 0.0):
            raise DomainError("photon gas forces mass = 0 and mu = 0")

    @classmethod
    def photon_gas(cls, volume: float, temperature: float) -> "CavitySpec":
        return cls(volume, temperature, 0.0, 0.0, Statistics.BOSE, photon=True)


@dataclass(frozen=True)
class ModeBin:
    """One momentum (or frequency) shell: center, width, energy, cell count."""

    p: float
    dp: float
    epsilon: float
    d_epsilon: float
    g: float

    def __post_init__(self):
        if self.p <= 0 or self.dp <= 0 or self.epsilon <= 0:
            raise DomainError("p, dp and epsilon must be positive")
        if self.g < 0:
            raise DomainError("cell count must be nonnegative")

    @classmethod
    def from_momentum(
        cls, volume: float, mass: float, p: float, dp: float
    ) -> "ModeBin":
        eps = math.hypot(p * C_LIGHT, mass * C_LIGHT**2)
        d_eps = p * C_LIGHT**2 / eps * dp
        return cls(p, dp, eps, d_eps, mode_count(volume, p, dp))

    @classmethod
    def from_photon_frequency(
        cls, volume: float, nu: float, dnu: float
    ) -> "ModeBin":
        return cls(
            H_PLANCK * nu / C_LIGHT,
            H_PLANCK * dnu / C_LIGHT,
            H_PLANCK * nu,
            H_PLANCK * dnu,
            photon_mode_count(volume, nu, dnu),
        )


def photon_bins(
    volume: float,
    temperature: float,
    n_bins: int,
    x_lo: float = 1e-3,
    x_hi: float = 40.0,
    polarizations: int = 2,
) -> list:
    """Log-spaced photon ModeBins covering x = h nu / kT in [x_lo, x_hi].

    polarizations multiplies the per-polarization cell count; the default
    2 describes the physical cavity field.
    """
    if n_bins < 1:
        raise DomainError("need at least one bin")
    if not 0 < x_lo < x_hi:
        raise DomainError("need 0 < x_lo < x_hi")
    if polarizations not in (1, 2):
        raise DomainError("polarizations must be 1 or 2")
    nu_scale = K_BOLTZMANN * temperature / H_PLANCK
    edges = nu_scale * np.exp(
        np.linspace(math.log(x_lo), math.log(x_hi), n_bins + 1)
    )
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nu_c = math.sqrt(lo * hi)
        base = ModeBin.from_photon_frequency(volume, nu_c, hi - lo)
        bins.append(
            ModeBin(base.p, base.dp, base.epsilon, base.d_epsilon,
                    polarizations * base.g)
        )
    return bins


@dataclass(frozen=True, eq=False)
class OccupancyDistribution:
    """Probabilities q(s) that one cell holds s quanta, plus the mean."""

    statistics: Statistics
    s_bar: float
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if q.ndim != 1 or q.size == 0 or np.any(q < 0):
            raise PreconditionError("q must be a nonempty nonnegative 1-D array")
        if abs(float(np.sum(q)) - 1.0) > 1e-10:
            raise PreconditionError("occupancy probabilities must sum to 1 within 1e-10")
        mean = float(np.sum(np.arange(q.size) * q))
        if abs(mean - self.s_bar) > 1e-10 * max(1.0, abs(self.s_bar)):
            raise PreconditionError("occupancy mean must equal s_bar within 1e-10")
        if self.statistics is Statistics.FERMI and q.size > 2 and np.any(q[2:] != 0.0):
            raise PreconditionError("Fermi occupancy is supported on s in {0, 1}")


def _geometric_weights(x: float, s_bar: float) -> np.ndarray:
    # support chosen so both the tail mass x^(M+1) and the tail mean
    # x^(M+1) (M+1+s_bar) stay under the truncation budget
    log_x = math.log(x)
    m = max(1, math.ceil(math.log(_TAIL_MASS) / log_x))
    for _ in range(8):
        if x ** (m + 1) * (m + 1 + s_bar) <= _TAIL_MEAN:
            break
        m = math.ceil((math.log(_TAIL_MEAN) - math.log(m + 1 + s_bar)) / log_x)
    if m + 1 > _MAX_SUPPORT:
        raise NumericalError(
            "occupancy support exceeds the bookkeeping cap; mode too close to the pole"
        )
    s = np.arange(m + 1, dtype=float)
    return -math.expm1(log_x) * np.exp(log_x * s)


def _tail_within_budget(w_last: float, ratio: float, m: int, mean: float) -> bool:
    # successive-weight ratios are monotone nonincreasing for these laws,
    # so past the cutoff the tail is dominated by a geometric series; the
    # float sum itself is no truncation measure, roundoff floors it near
    # 1e-11 once the log-space terms grow large
    if not ratio < 1.0:
        return False
    geo = ratio / (1.0 - ratio)
    tail_mass = w_last * geo
    tail_mean = w_last * (m * geo + ratio / (1.0 - ratio) ** 2)
    return tail_mass <= _TAIL_MASS and tail_mean <= _TAIL_MEAN * max(1.0, mean)


def _poisson_weights(lam: float) -> np.ndarray:
    if lam == 0.0:
        return np.array([1.0])
    m = int(lam + 15.0 * math.sqrt(lam) + 30.0)
    while True:
        s = np.arange(m + 1, dtype=float)
        w = np.exp(s * math.log(lam) - lam - gammaln(s + 1.0))
        if _tail_within_budget(float(w[-1]), lam / (m + 1.0), m, lam):
            return w
        m *= 2
        if m > _MAX_SUPPORT:
            raise NumericalError("Poisson support exceeds the bookkeeping cap")


def occupancy(
    statistics: Statistics, epsilon: float, mu: float, temperature: float
) -> OccupancyDistribution:
    """Equilibrium distribution of the quanta count in one cell.

    BOSE: geometric q(s) = (1-x) x^s with x = exp(-(eps-mu)/kT), needs
    eps > mu. FERMI: two-point law on {0, 1}. BOLTZMANN: Poisson with
    mean x, the no-condensation reduction.
    """
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    y = (epsilon - mu) / (K_BOLTZMANN * temperature)
    if statistics is Statistics.BOSE:
        if y <= 0:
            raise DomainError("Bose occupancy diverges for epsilon <= mu")
        x = math.exp(-y)
        if x == 0.0:
            return OccupancyDistribution(statistics, 0.0, np.array([1.0]))
        s_bar = x / -math.expm1(-y)
        return OccupancyDistribution(statistics, s_bar, _geometric_weights(x, s_bar))
    if statistics is Statistics.FERMI:
        # logistic filling, evaluated on the stable side
        if y >= 0:
            e = math.exp(-y)
            q1 = e / (1.0 + e)
        else:
            q1 = 1.0 / (1.0 + math.exp(y))
        return OccupancyDistribution(statistics, q1, np.array([1.0 - q1, q1]))
    if y < -700.0:
        raise NumericalError("Boltzmann weight overflows double precision")
    lam = math.exp(-y)
    return OccupancyDistribution(statistics, lam, _poisson_weights(lam))


def spectral_distribution(cavity: CavitySpec, bins) -> np.ndarray:
    """Expected quanta count N dp per bin: g / (exp((eps-mu)/kT) -+ ... ).

    BOSE uses the minus sign, FERMI the plus sign, BOLTZMANN the bare
    exponential.
    """
    kt = K_BOLTZMANN * cavity.temperature
    out = np.empty(len(bins))
    for i, b in enumerate(bins):
        y = (b.epsilon - cavity.mu) / kt
        if cavity.statistics is Statistics.BOSE:
            if y <= 0:
                raise DomainError(
                    f"Bose pole in bin {i}: epsilon <= mu makes the occupancy diverge"
                )
            out[i] = b.g * math.exp(-y) if y > 700.0 else b.g / math.expm1(y)
        elif cavity.statistics is Statistics.FERMI:
            out[i] = b.g * math.exp(-y) if y > 700.0 else b.g / (math.exp(y) + 1.0)
        else:
            if y < -700.0:
                raise NumericalError("Boltzmann weight overflows double precision")
            out[i] = b.g * math.exp(-y)
    return out


def balance_residual(
    a: float,
    a_prime: float,
    b: float,
    c: float,
    c_prime: float,
    n: int,
    n_prime: int,
    e1i: float,
    e1f: float,
    e2i: float,
    e2f: float,
    s: float,
    r: float,
    s_prime: float,
    r_prime: float,
    b2: float = None,
) -> float:
    """Relative mismatch of the collision balance identity.

    The stationary condition equates the occupancy-probability product
    before a collision that moves n quanta of species 1 (s -> s-n,
    r -> r+n) against n' quanta of species 2, with the product after.
    Exponential cell laws p(s) = a exp(-(b eps - c) s) per species, one
    shared temperature parameter b, satisfy it exactly; b2 overrides the
    second species' b as a deliberate symmetry break.
    """
    for name, value in (("n", n), ("n_prime", n_prime)):
        if int(value) != value or value < 0:
            raise DomainError(f"{name} must be a nonnegative integer")
    if a == 0 or a_prime == 0:
        raise DomainError("normalization factors a, a_prime must be nonzero")
    lhs66 = n * (e1i - e1f)
    rhs66 = n_prime * (e2f - e2i)
    scale = max(abs(lhs66), abs(rhs66))
    if scale > 0 and abs(lhs66 - rhs66) > 1e-12 * scale:
        raise PreconditionError(
            "energy bookkeeping violated: n(e1i - e1f) must equal n'(e2f - e2i)"
        )
    if s - n < 0 or s_prime - n_prime < 0:
        raise DomainError("collision removes more quanta than the cell holds")
    b_second = b if b2 is None else b2

    def p(occ, eps):
        return a * math.exp(-(b * eps - c) * occ)

    def q(occ, eps):
        return a_prime * math.exp(-(b_second * eps - c_prime) * occ)

    lhs = p(s, e1i) * p(r, e1f) * q(s_prime, e2i) * q(r_prime, e2f)
    rhs = p(s - n, e1i) * p(r + n, e1f) * q(s_prime - n_prime, e2i) * q(
        r_prime + n_prime, e2f
    )
    if lhs == 0.0:
        raise NumericalError("balance product underflowed; rescale the parameters")
    return abs(lhs - rhs) / abs(lhs)


def einstein_balance(
    temperature: float, nu: float, volume: float, dnu: float
) -> tuple:
    """(lhs, rhs, A_over_B) of the two-level balance against Planck radiation.

    With rho the per-polarization Planck spectral energy density, the
    absorption side e^(-eps_lower/kT) rho must equal the emission side
    e^(-eps_upper/kT) (rho + A/B), and the spontaneous/stimulated ratio
    is A/B = 4 pi h nu^3 / c^3.
    """
    if temperature <= 0 or nu <= 0 or volume <= 0 or dnu <= 0:
        raise DomainError("all inputs must be positive")
    x = H_PLANCK * nu / (K_BOLTZMANN * temperature)
    a_over_b = 4.0 * math.pi * H_PLANCK * nu**3 / C_LIGHT**3
    mode = ModeBin.from_photon_frequency(volume, nu, dnu)
    if x > 700.0:
        n_planck = mode.g * math.exp(-x)
    else:
        n_planck = mode.g / math.expm1(x)
    rho = H_PLANCK * nu * n_planck / (volume * dnu)
    lhs = rho
    rhs = math.exp(-x) * (rho + a_over_b)
    return lhs, rhs, a_over_b


def _stirling(z):
    # z ln z - z, continued by 0 at z = 0
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = z[pos] * np.log(z[pos]) - z[pos]
    return out


def _entropy_energy_number(
    statistics: Statistics, bins, temperature: float, mu: float
) -> tuple:
    s_total = 0.0
    energy = 0.0
    number = 0.0
    for b in bins:
        d = occupancy(statistics, b.epsilon, mu, temperature)
        s_total += float(_stirling(b.g)) - float(np.sum(_stirling(b.g * d.q)))
        energy += b.g * d.s_bar * b.epsilon
        number += b.g * d.s_bar
    return K_BOLTZMANN * s_total, energy, number


def entropy_and_derivatives(cavity: CavitySpec, bins) -> tuple:
    """(S, dS_dE, dS_dN) for fixed bins at the cavity's (T, mu).

    S counts the ways of distributing the cells of each bin over the
    occupancy classes, ln g! - sum_s ln (g q_s)! under Stirling. The
    derivatives come from centered finite differences over T and mu
    with the bins held fixed, solved as a 2x2 system; at equilibrium
    they return 1/T and -mu/T.
    """
    if len(bins) == 0:
        raise DomainError("need at least one bin")
    temperature, mu = cavity.temperature, cavity.mu
    stats = cavity.statistics

    # Stirling guard on the classes that actually carry mass
    for b in bins:
        q = occupancy(stats, b.epsilon, mu, temperature).q
        heavy = q > _GUARD_MASS
        if np.any(b.g * q[heavy] < _STIRLING_MIN):
            warnings.warn(
                "some occupancy classes hold fewer than 10 cells; "
                "the Stirling entropy is degraded",
                AccuracyWarning,
                stacklevel=2,
            )
            break

    s0, _, _ = _entropy_energy_number(stats, bins, temperature, mu)
    dt = 1e-4 * temperature
    dmu = 1e-4 * max(abs(mu), K_BOLTZMANN * temperature)
    s_tp, e_tp, n_tp = _entropy_energy_number(stats, bins, temperature + dt, mu)
    s_tm, e_tm, n_tm = _entropy_energy_number(stats, bins, temperature - dt, mu)
    s_mp, e_mp, n_mp = _entropy_energy_number(stats, bins, temperature, mu + dmu)
    s_mm, e_mm, n_mm = _entropy_energy_number(stats, bins, temperature, mu - dmu)
    jac = np.array(
        [
            [(e_tp - e_tm) / (2 * dt), (n_tp - n_tm) / (2 * dt)],
            [(e_mp - e_mm) / (2 * dmu), (n_mp - n_mm) / (2 * dmu)],
        ]
    )
    grad_s = np.array([(s_tp - s_tm) / (2 * dt), (s_mp - s_mm) / (2 * dmu)])
    try:
        ds_de, ds_dn = np.linalg.solve(jac, grad_s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("degenerate (T, mu) response; cannot separate dS/dE from dS/dN") from exc
    return s0, float(ds_de), float(ds_dn)


def vonlaue_dof(
    area: float,
    length: float,
    dnu: float,
    focal_area: float,
    packet_dy: float,
    packet_dnu: float = None,
    r: float = 2.0 * math.pi,
) -> tuple:
    """(F, N1, N2, N3, product_ratio) of the bundle degree-of-freedom count.

    F = A l dnu / (a c) counts field degrees of freedom; the packet
    decomposition gives N1 = dnu/Dnu spectral slots, N2 = A/a transverse
    spots, N3 = l/(2 Dy) longitudinal slots. With the average-extension
    convention Dnu = r c / (4 pi Dy) at r = 2 pi, the product recovers F
    exactly; smaller r (tighter packets) overcounts by 2 pi / r.
    """
    if min(area, length, dnu, focal_area, packet_dy) <= 0:
        raise DomainError("all geometric inputs must be positive")
    if r <= 0:
        raise DomainError("extension convention r must be positive")
    f_count = area * length * dnu / (focal_area * C_LIGHT)
    if packet_dnu is None:
        packet_dnu = r * C_LIGHT / (4.0 * math.pi * packet_dy)
    elif packet_dnu <= 0:
        raise DomainError("packet_dnu must be positive")
    n1 = dnu / packet_dnu
    n2 = area / focal_area
    n3 = length / (2.0 * packet_dy)
    return f_count, n1, n2, n3, n1 * n2 * n3 / f_count


def _check_packet_count(g) -> int:
    if int(g) != g or g < 1:
        raise DomainError("g must be a positive integer")
    return int(g)


def _negative_binomial_weights(g: int, mean_per_packet: float) -> np.ndarray:
    # w(n) = C(g+n-1, n) (1+sb)^(-g) (1+1/sb)^(-n), summed in log space
    sb = mean_per_packet
    mean = g * sb
    m = int(mean + 15.0 * math.sqrt(g * sb * (1.0 + sb)) + 30.0)
    while True:
        n = np.arange(m + 1, dtype=float)
        log_w = (
            log_binomial(g + n - 1.0, n)
            - g * math.log1p(sb)
            - n * math.log1p(1.0 / sb)
        )
        w = np.exp(log_w)
        # w(n+1)/w(n) = (g+n)/(n+1) * sb/(1+sb), nonincreasing for g >= 1
        ratio = (g + m) / (m + 1.0) * sb / (1.0 + sb)
        if _tail_within_budget(float(w[-1]), ratio, m, mean):
            return w
        m *= 2
        if m > _MAX_SUPPORT:
            raise NumericalError("count support exceeds the bookkeeping cap")


def binomial_pmf(n: int, eta: float) -> np.ndarray:
    """b(m; n, eta) over m = 0..n."""
    if int(n) != n or n < 0:
        raise DomainError("n must be a nonnegative integer")
    if not 0.0 <= eta <= 1.0:
        raise DomainError("eta must lie in [0, 1]")
    n = int(n)
    if eta == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    if eta == 1.0:
        out = np.zeros(n + 1)
        out[n] = 1.0
        return out
    m = np.arange(n + 1, dtype=float)
    log_w = log_binomial(float(n), m) + m * math.log(eta) + (n - m) * math.log1p(-eta)
    return np.exp(log_w)


def packet_quanta_dist(statistics: Statistics, g, s_bar: float) -> np.ndarray:
    """w(n; g): probability that g cells hold n quanta in total.

    BOSE gives the negative binomial built from the geometric cell law;
    FERMI the binomial over at most g quanta; BOLTZMANN the Poisson sum
    of independent cells.
    """
    g = _check_packet_count(g)
    if statistics is Statistics.FERMI:
        if not 0.0 < s_bar < 1.0:
            raise DomainError("Fermi cells need 0 < s_bar < 1")
        return binomial_pmf(g, s_bar)
    if s_bar <= 0:
        raise DomainError("s_bar must be positive")
    if statistics is Statistics.BOSE:
        return _negative_binomial_weights(g, s_bar)
    return _poisson_weights(g * s_bar)


@dataclass(frozen=True, eq=False)
class CountDistribution:
    """Detector-count probabilities W(m) from g cells, mean m_bar."""

    statistics: Statistics
    g: int
    m_bar: float
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        if int(self.g) != self.g or self.g < 1:
            raise PreconditionError("g must be a positive integer")
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise PreconditionError("W must be a nonempty nonnegative 1-D array")
        if abs(float(np.sum(w)) - 1.0) > 1e-9:
            raise PreconditionError("count probabilities must sum to 1 within 1e-9")
        mean = float(np.sum(np.arange(w.size) * w))
        if abs(mean - self.m_bar) > 1e-9 * max(1.0, abs(self.m_bar)):
            raise PreconditionError("count mean must equal m_bar within 1e-9")
        if self.statistics is Statistics.FERMI and self.m_bar > self.g:
            raise PreconditionError("Fermi counts cannot exceed the cell count")

    def variance(self) -> float:
        m = np.arange(self.w.size, dtype=float)
        return float(np.sum((m - self.m_bar) ** 2 * self.w))

    def central_moment(self, order: int) -> float:
        m = np.arange(self.w.size, dtype=float)
        return float(np.sum((m - self.m_bar) ** order * self.w))


def count_distribution(
    statistics: Statistics, g, s_bar: float, eta: float
) -> CountDistribution:
    """Closed-form count law for detection efficiency eta.

    Thinning the cell law by eta only rescales its parameter: BOSE stays
    negative binomial with eta s_bar, FERMI stays binomial with eta
    s_bar, BOLTZMANN stays Poisson with g eta s_bar.
    """
    g = _check_packet_count(g)
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")
    if s_bar <= 0:
        raise DomainError("s_bar must be positive")
    thinned = eta * s_bar
    if statistics is Statistics.FERMI:
        if thinned >= 1.0:
            raise DomainError("Fermi counts need eta * s_bar < 1")
        w = binomial_pmf(g, thinned)
    elif statistics is Statistics.BOSE:
        w = _negative_binomial_weights(g, thinned)
    else:
        w = _poisson_weights(g * thinned)
    return CountDistribution(statistics, g, g * thinned, w)


def thinned_count_distribution(
    statistics: Statistics, g, s_bar: float, eta: float
) -> np.ndarray:
    """Brute-force count law: fold the cell total n over binomial thinning.

    W(m) = sum_n w(n; g) b(m; n, eta). Kept separate from the closed
    forms on purpose; their agreement is the folding consistency check.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")
    if statistics is Statistics.FERMI and not 0.0 < s_bar < 1.0:
        raise DomainError("the folding route needs the Fermi cell law, 0 < s_bar < 1")
    w_quanta = packet_quanta_dist(statistics, g, s_bar)
    out = np.zeros(w_quanta.size)
    for n, weight in enumerate(w_quanta):
        if weight == 0.0:
            continue
        out[: n + 1] += weight * binomial_pmf(n, eta)
    return out


def count_variance(statistics: Statistics, g, m_bar: float) -> float:
    """Variance of the count: m_bar (1 + m_bar/g) Bose, (1 - m_bar/g) Fermi."""
    g = _check_packet_count(g)
    if m_bar < 0:
        raise DomainError("m_bar must be nonnegative")
    if statistics is Statistics.BOSE:
        return m_bar * (1.0 + m_bar / g)
    if statistics is Statistics.FERMI:
        if m_bar > g:
            raise DomainError("Fermi counts cannot exceed the cell count")
        return m_bar * (1.0 - m_bar / g)
    return m_bar


def binomial_fold_check(n1: int, n2: int, eta: float, eta2: float = None) -> float:
    """Max deviation between folded binomials and the pooled binomial.

    Equal eta folds exactly (machine precision); unequal efficiencies
    leave a residual of order (eta1 - eta2)^2.
    """
    second = eta if eta2 is None else eta2
    b1 = binomial_pmf(n1, eta)
    b2 = binomial_pmf(n2, second)
    folded = np.convolve(b1, b2)
    pooled_eta = (n1 * eta + n2 * second) / (n1 + n2)
    pooled = binomial_pmf(n1 + n2, pooled_eta)
    return float(np.max(np.abs(folded - pooled)))


def sample_counts(
    statistics: Statistics, g, s_bar: float, eta: float, n: int, rng
) -> np.ndarray:
    """n Monte Carlo detector counts: draw the cell total, thin by eta.

    Consumes n uniforms (inverse-CDF on the cell total) and n binomial
    draws from the stream, in that order.
    """
    if n <= 0:
        raise DomainError("sample count must be positive")
    if not 0.0 < eta <= 1.0:
        raise DomainError("eta must lie in (0, 1]")
    w = packet_quanta_dist(statistics, g, s_bar)
    cum = np.cumsum(w)
    u = rng.uniform(size=n)
    quanta = np.searchsorted(cum, u, side="right")
    quanta = np.minimum(quanta, w.size - 1)
    return rng.binomial(quanta, eta)
