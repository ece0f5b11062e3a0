"""Spreading and coherence of free relativistic wave packets.

Gaussian packets spread at an asymptotically constant velocity set by
their momentum-space width. For a massive particle the longitudinal and
transverse spreading velocities pick up different powers of (1 - beta^2),
so fast packets stay narrow sideways far longer than along the flight
line. The zero-mass case degenerates: no longitudinal spreading at all
in vacuum, and the transverse formula needs the frequency route rather
than the 1/kappa route.

SI units throughout (meters, seconds, kilograms, joules).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import e as E_CHARGE
from scipy.constants import electron_mass as M_ELECTRON
from scipy.constants import hbar as HBAR

from .errors import DomainError, PreconditionError
from .numkit import SampledFunction1D

__all__ = [
    "Dispersion",
    "SpectralPacket",
    "PacketEvolution",
    "group_velocity",
    "width_at_time",
    "instantaneous_spreading_velocity",
    "tau_doubling",
    "spreading_velocities",
    "min_width_spreading_bound",
    "spread_after_flight",
    "coherence_profile",
    "accumulation_time",
    "stern_gerlach_deflection",
    "intrinsic_moment",
    "BOHR_MAGNETON",
]

# |gamma| crossing that defines the coherence length
_COHERENCE_LEVEL = math.exp(-0.5)


@dataclass(frozen=True)
class Dispersion:
    """Free relativistic dispersion omega = c sqrt(k^2 + kappa^2), kappa = mc/hbar."""

    mass: float

    def __post_init__(self):
        if self.mass < 0:
            raise DomainError("mass must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.mass * C_LIGHT / HBAR

    @property
    def zero_mass(self) -> bool:
        return self.mass == 0.0


@dataclass(frozen=True)
class SpectralPacket:
    """Wavenumber-space description: carrier k0 along x and the three widths."""

    k0: float
    dkx: float
    dky: float
    dkz: float

    def __post_init__(self):
        if self.k0 < 0:
            raise DomainError("carrier wavenumber must be nonnegative")
        if min(self.dkx, self.dky, self.dkz) <= 0:
            raise DomainError("all spectral widths must be positive")

    @property
    def narrowness(self) -> float:
        if self.k0 == 0:
            return math.inf
        return max(self.dkx, self.dky, self.dkz) / self.k0

    @property
    def narrow_warning(self) -> bool:
        """True when the narrow-band treatment is getting doubtful."""
        return self.narrowness > 0.1


@dataclass(frozen=True)
class PacketEvolution:
    """One-axis width history: sigma(t)^2 = sigma0^2 + dv_g^2 (t - t0)^2."""

    sigma0: float
    t0: float
    v_g: float
    dv_g: float

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise DomainError("initial width must be positive")
        if self.dv_g < 0:
            raise DomainError("group-velocity spread must be nonnegative")


def group_velocity(dispersion: Dispersion, k0: float) -> tuple:
    """(v0, omega0) at carrier k0: omega0 = c sqrt(k0^2 + kappa^2), v0 = k0 c^2 / omega0."""
    if k0 < 0:
        raise DomainError("carrier wavenumber must be nonnegative")
    if dispersion.zero_mass:
        if k0 == 0:
            raise DomainError("zero-mass packet needs a positive carrier wavenumber")
        return C_LIGHT, k0 * C_LIGHT
    kappa = dispersion.kappa
    omega0 = C_LIGHT * math.hypot(k0, kappa)
    return k0 * C_LIGHT**2 / omega0, omega0


def width_at_time(evolution: PacketEvolution, t: float) -> float:
    return math.hypot(evolution.sigma0, evolution.dv_g * (t - evolution.t0))


def instantaneous_spreading_velocity(evolution: PacketEvolution, t: float) -> float:
    """d sigma / dt at time t; grows from 0 toward the asymptote dv_g."""
    return (
        evolution.dv_g**2
        * abs(t - evolution.t0)
        / width_at_time(evolution, t)
    )


def tau_doubling(evolution: PacketEvolution) -> float:
    """Time for the width to double: sqrt(3) sigma0 / dv_g.

    At this moment the spreading velocity has already reached
    (sqrt(3)/2) ~ 87% of its asymptote, which is why the asymptotic
    rate is the honest figure of merit for any flight much longer
    than the doubling time.
    """
    if evolution.dv_g == 0:
        return math.inf
    return math.sqrt(3.0) * evolution.sigma0 / evolution.dv_g


def spreading_velocities(dispersion: Dispersion, packet: SpectralPacket) -> tuple:
    """(v_sx, v_sy, ratio) of asymptotic spreading velocities.

    Longitudinal: v_sx = c^2 dkx / omega0. Transverse: v_sy = c^4
    kappa^2 dky / omega0^3. Both survive the m -> 0 limit through the
    frequency route; the ratio v_sx / v_sy = (k0^2 + kappa^2)/kappa^2
    = 1/(1 - beta^2) diverges for photons (returned as inf).
    """
    v0, omega0 = group_velocity(dispersion, packet.k0)
    v_sx = C_LIGHT**2 * packet.dkx / omega0
    kappa = dispersion.kappa
    v_sy = C_LIGHT**4 * kappa**2 * packet.dky / omega0**3
    if v_sy == 0.0:
        return v_sx, 0.0, math.inf
    return v_sx, v_sy, v_sx / v_sy


def min_width_spreading_bound(
    dispersion: Dispersion, k0: float, delta_x0: float, direction: str
) -> float:
    """Least possible asymptotic spreading velocity for initial width delta_x0.

    The minimum-uncertainty packet saturates dk >= 1/(2 dx). Transverse
    bound: c (1-beta^2)^(1/2) / (2 kappa dx0); longitudinal picks up one
    more power of (1-beta^2).
    """
    if dispersion.zero_mass:
        raise DomainError("bound needs a finite Compton wavenumber (massive packet)")
    if delta_x0 <= 0:
        raise DomainError("initial width must be positive")
    v0, omega0 = group_velocity(dispersion, k0)
    beta_sq = (v0 / C_LIGHT) ** 2
    kappa = dispersion.kappa
    if direction == "transverse":
        return C_LIGHT * math.sqrt(1.0 - beta_sq) / (2.0 * kappa * delta_x0)
    if direction == "longitudinal":
        return C_LIGHT * (1.0 - beta_sq) ** 1.5 / (2.0 * kappa * delta_x0)
    raise DomainError("direction must be 'transverse' or 'longitudinal'")


def spread_after_flight(
    dispersion: Dispersion,
    k0: float,
    width0: float,
    distance: float,
    direction: str = "transverse",
) -> dict:
    """Width growth over a straight flight, minimum-uncertainty initial packet.

    Returns a dict with the carrier kinematics (v0, omega0, beta), the
    asymptotic spreading velocity for the chosen direction, the doubling
    time, flight time, the final width, and which regime applied
    ("asymptotic" when the flight lasts at least three doubling times,
    else "exact").
    """
    if width0 <= 0 or distance <= 0:
        raise DomainError("width0 and distance must be positive")
    v0, omega0 = group_velocity(dispersion, k0)
    beta = v0 / C_LIGHT
    v_spread = min_width_spreading_bound(dispersion, k0, width0, direction)
    flight_time = distance / v0
    tau2 = math.sqrt(3.0) * width0 / v_spread
    if flight_time >= 3.0 * tau2:
        final_width = v_spread * flight_time
        regime = "asymptotic"
    else:
        final_width = math.hypot(width0, v_spread * flight_time)
        regime = "exact"
    return {
        "v0": v0,
        "omega0": omega0,
        "beta": beta,
        "kappa": dispersion.kappa,
        "v_spread": v_spread,
        "tau2": tau2,
        "flight_time": flight_time,
        "final_width": final_width,
        "regime": regime,
    }


def coherence_profile(psi: SampledFunction1D, shifts) -> tuple:
    """(|gamma| at the requested shifts, coherence length).

    gamma(b) = integral psi*(y) psi(y + b) dy for a unit-norm psi. The
    coherence length is where |gamma| first falls to e^(-1/2), found on
    the grid's own cell ladder and refined by linear interpolation; None
    if |gamma| never crosses inside the grid.
    """
    if abs(psi.norm_sq() - 1.0) > 1e-8:
        raise PreconditionError("psi must be normalized to 1 within 1e-8")
    x = psi.grid
    vals = np.asarray(psi.values)
    dx = psi.spacing

    def gamma_abs(b: float) -> float:
        xs = x + b
        inside = (xs >= psi.start) & (xs <= psi.end)
        if not np.any(inside):
            return 0.0
        shifted = np.zeros_like(vals)
        pos = (xs[inside] - psi.start) / dx
        i0 = np.floor(pos).astype(int)
        frac = pos - i0
        i0 = np.clip(i0, 0, psi.n - 2)
        shifted[inside] = vals[i0] * (1.0 - frac) + vals[i0 + 1] * frac
        return abs(complex(np.sum(np.conj(vals) * shifted)) * dx)

    span = psi.end - psi.start
    requested = []
    for b in shifts:
        if abs(b) > span:
            raise DomainError(f"shift {b} extends beyond the sampled grid")
        requested.append(gamma_abs(float(b)))

    coherence_length = None
    prev = gamma_abs(0.0)
    for j in range(1, psi.n):
        b = j * dx
        cur = gamma_abs(b)
        if cur <= _COHERENCE_LEVEL:
            # linear interpolation between the straddling cells
            if prev == cur:
                coherence_length = b
            else:
                coherence_length = (j - 1) * dx + dx * (prev - _COHERENCE_LEVEL) / (
                    prev - cur
                )
            break
        prev = cur
    return requested, coherence_length


def accumulation_time(energy_threshold: float, flux: float, area: float) -> float:
    """Time for a steady energy flux to pile threshold energy onto one target area."""
    if energy_threshold <= 0 or flux <= 0 or area <= 0:
        raise DomainError("threshold, flux and area must all be positive")
    return energy_threshold / (flux * area)


def stern_gerlach_deflection(
    mu_z: float, grad_b: float, dt: float, p_y: float
) -> float:
    """Deflection angle alpha_z = mu_z (dB_z/dz) dt / p_y of a beam splitter."""
    if p_y <= 0:
        raise DomainError("beam momentum must be positive")
    if dt <= 0:
        raise DomainError("transit time must be positive")
    return mu_z * grad_b * dt / p_y


def intrinsic_moment(mass: float) -> float:
    """Magnetic moment e hbar / 2m of a unit-charge spin-1/2 particle."""
    if mass <= 0:
        raise DomainError("mass must be positive")
    return E_CHARGE * HBAR / (2.0 * mass)


BOHR_MAGNETON = intrinsic_moment(M_ELECTRON)
