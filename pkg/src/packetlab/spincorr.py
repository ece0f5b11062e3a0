"""Spin-pair correlation engine.

Closed-form joint probabilities and expectation values for the singlet,
the semiclassical independent-evolution model and the triplet states,
Monte Carlo pair sampling by the sequential reduction picture, CHSH
combinations, local-hidden-variable bound audits, and the bipartite
no-signaling check computed by three independent routes.

Conventions: outcomes are +1/-1, theta is always arccos of the clamped
dot product of the two apparatus axes, and hidden-variable models live on
a finite weighted grid so their averages are exact given the grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, PreconditionError, UnsupportedModelError
from .numkit import RandomStream, UnitVector3, sample_isotropic_directions

__all__ = [
    "Outcome",
    "ModelKind",
    "PairModel",
    "JointProbability",
    "LhvModel",
    "BipartiteCoefficients",
    "spin_up_probability",
    "joint_probability",
    "joint_table",
    "expectation",
    "chsh",
    "marginal",
    "sample_pair",
    "sample_pair_counts",
    "coincidence_expectation",
    "lhv_expectation",
    "lhv_chsh_audit",
    "random_lhv_model",
    "sign_anticorrelated_model",
    "semiclassical_lhv_model",
    "basis_change",
    "bipartite_joint",
    "no_signaling_audit",
    "coplanar_axis",
    "singlet_coefficients",
]

CHSH_BOUND_TOL = 1e-9


class Outcome(enum.IntEnum):
    """Analyzer outcome, +1 or -1 only."""

    PLUS = 1
    MINUS = -1


def _outcome(r) -> int:
    try:
        return int(Outcome(r))
    except ValueError:
        raise DomainError(f"outcome must be +1 or -1, got {r!r}") from None


class ModelKind(enum.Enum):
    QM_SINGLET = "qm_singlet"
    SEMICLASSICAL = "semiclassical"
    TRIPLET = "triplet"


@dataclass(frozen=True)
class PairModel:
    """Correlated-pair model selector.

    Triplet states carry the magnetic quantum number m and the preferred
    axis it refers to; the paper gives only their expectation values, so
    joint laws are deliberately not defined for them.
    """

    kind: ModelKind
    triplet_m: Optional[int] = None
    axis: Optional[UnitVector3] = None

    def __post_init__(self):
        if self.kind is ModelKind.TRIPLET:
            if self.triplet_m not in (-1, 0, 1):
                raise DomainError("triplet m must be one of -1, 0, +1")
            if not isinstance(self.axis, UnitVector3):
                raise PreconditionError("triplet model needs a preferred axis")
        else:
            if self.triplet_m is not None or self.axis is not None:
                raise PreconditionError("m and axis are only meaningful for triplets")

    @classmethod
    def qm_singlet(cls) -> "PairModel":
        return cls(ModelKind.QM_SINGLET)

    @classmethod
    def semiclassical(cls) -> "PairModel":
        return cls(ModelKind.SEMICLASSICAL)

    @classmethod
    def triplet(cls, m: int, axis: UnitVector3) -> "PairModel":
        return cls(ModelKind.TRIPLET, m, axis)


@dataclass(frozen=True)
class JointProbability:
    """2x2 outcome table P(r_A, r_B) for one pair of settings."""

    pp: float
    pm: float
    mp: float
    mm: float

    def __post_init__(self):
        entries = (self.pp, self.pm, self.mp, self.mm)
        if any(p < -1e-15 or p > 1.0 + 1e-15 for p in entries):
            raise PreconditionError("joint probabilities must lie in [0, 1]")
        if abs(sum(entries) - 1.0) > 1e-12:
            raise PreconditionError("joint probabilities must sum to 1 within 1e-12")

    def prob(self, r_a: int, r_b: int) -> float:
        r_a, r_b = _outcome(r_a), _outcome(r_b)
        if r_a > 0:
            return self.pp if r_b > 0 else self.pm
        return self.mp if r_b > 0 else self.mm

    @property
    def expectation(self) -> float:
        return self.pp + self.mm - self.pm - self.mp


def _angle_between(a: UnitVector3, b: UnitVector3) -> float:
    # clamp guards rounding at parallel and antiparallel axes
    return math.acos(max(-1.0, min(1.0, a.dot(b))))


def coplanar_axis(angle_rad: float) -> UnitVector3:
    """Axis in the x-z plane at the given angle from the z axis."""
    return UnitVector3(math.sin(angle_rad), 0.0, math.cos(angle_rad))


def spin_up_probability(theta: float) -> float:
    """Probability (1 + cos theta)/2 of the up outcome at angle theta."""
    if not 0.0 <= theta <= math.pi:
        raise DomainError("theta must lie in [0, pi]")
    return 0.5 * (1.0 + math.cos(theta))


def joint_probability(
    model: PairModel, r_a: int, r_b: int, a: UnitVector3, b: UnitVector3
) -> float:
    """Joint outcome probability for the singlet or the semiclassical model.

    Singlet: (1 - r_A r_B cos theta)/4. Semiclassical: the same with the
    correlation reduced by a factor 3. Triplet states have no joint law
    here and are rejected.
    """
    if model.kind is ModelKind.TRIPLET:
        raise UnsupportedModelError("no joint probability law for triplet states")
    r = _outcome(r_a) * _outcome(r_b)
    cos_t = math.cos(_angle_between(a, b))
    if model.kind is ModelKind.QM_SINGLET:
        return 0.25 * (1.0 - r * cos_t)
    return 0.25 * (1.0 - r * cos_t / 3.0)


def joint_table(model: PairModel, a: UnitVector3, b: UnitVector3) -> JointProbability:
    return JointProbability(
        pp=joint_probability(model, +1, +1, a, b),
        pm=joint_probability(model, +1, -1, a, b),
        mp=joint_probability(model, -1, +1, a, b),
        mm=joint_probability(model, -1, -1, a, b),
    )


def expectation(model: PairModel, a: UnitVector3, b: UnitVector3) -> float:
    """Expectation of the product of the two outcomes."""
    if model.kind is ModelKind.QM_SINGLET:
        return -math.cos(_angle_between(a, b))
    if model.kind is ModelKind.SEMICLASSICAL:
        return -math.cos(_angle_between(a, b)) / 3.0
    az = a.dot(model.axis)
    bz = b.dot(model.axis)
    if model.triplet_m == 0:
        return a.dot(b) - 2.0 * az * bz
    return az * bz


def chsh(
    model: PairModel,
    a: UnitVector3,
    b: UnitVector3,
    a2: UnitVector3,
    b2: UnitVector3,
) -> float:
    """K = |E(a,b) + E(a,b') + E(a',b) - E(a',b')|."""
    return abs(
        expectation(model, a, b)
        + expectation(model, a, b2)
        + expectation(model, a2, b)
        - expectation(model, a2, b2)
    )


def marginal(model: PairModel, a: UnitVector3, b: UnitVector3, r_b: int) -> float:
    """Probability that B observes r_b, summed over A's outcomes.

    Computed as the actual sum over r_A rather than hard-coded, so the
    equality with 1/2 is a checked consequence, not an assumption.
    """
    return joint_probability(model, +1, r_b, a, b) + joint_probability(
        model, -1, r_b, a, b
    )


def sample_pair(
    model: PairModel, a: UnitVector3, b: UnitVector3, rng: RandomStream
) -> tuple:
    """Draw one outcome pair by the sequential reduction picture.

    Singlet: a hidden spin direction sigma is drawn isotropically, r_A
    with probability (1 + r_A sigma.a)/2; particle 2 then points along
    -r_A a and r_B follows with probability (1 + r_B (-r_A a).b)/2.
    Semiclassical: both outcomes are drawn independently from sigma, with
    particle 2 pointing along -sigma.

    Consumes exactly four uniforms per call, in the order
    (cos polar, azimuth, A outcome, B outcome).
    """
    counts = sample_pair_counts(model, a, b, 1, rng)
    if counts[0]:
        return Outcome.PLUS, Outcome.PLUS
    if counts[1]:
        return Outcome.PLUS, Outcome.MINUS
    if counts[2]:
        return Outcome.MINUS, Outcome.PLUS
    return Outcome.MINUS, Outcome.MINUS


def sample_pair_counts(
    model: PairModel, a: UnitVector3, b: UnitVector3, n: int, rng: RandomStream
) -> tuple:
    """Vectorized pair sampling; returns counts (n_pp, n_pm, n_mp, n_mm).

    Uses the same per-pair uniform layout as sample_pair, so n batched
    pairs reproduce n sequential scalar calls exactly.
    """
    if model.kind is ModelKind.TRIPLET:
        raise UnsupportedModelError("no sampling law for triplet states")
    if n <= 0:
        raise DomainError("n must be positive")
    u = rng.uniform(size=4 * n).reshape(n, 4)
    z = 2.0 * u[:, 0] - 1.0
    phi = 2.0 * math.pi * u[:, 1]
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    sigma = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    a_vec = a.as_array()
    b_vec = b.as_array()

    p_a_plus = 0.5 * (1.0 + sigma @ a_vec)
    r_a = np.where(u[:, 2] < p_a_plus, 1.0, -1.0)
    if model.kind is ModelKind.QM_SINGLET:
        # second packet reduced to point along -r_A a
        p_b_plus = 0.5 * (1.0 - r_a * float(a_vec @ b_vec))
    else:
        p_b_plus = 0.5 * (1.0 - sigma @ b_vec)
    r_b = np.where(u[:, 3] < p_b_plus, 1.0, -1.0)

    n_pp = int(np.sum((r_a > 0) & (r_b > 0)))
    n_pm = int(np.sum((r_a > 0) & (r_b < 0)))
    n_mp = int(np.sum((r_a < 0) & (r_b > 0)))
    n_mm = n - n_pp - n_pm - n_mp
    return n_pp, n_pm, n_mp, n_mm


def coincidence_expectation(n_ll: int, n_lr: int, n_rl: int, n_rr: int) -> float:
    """Correlation estimate from the four coincidence counters.

    (N_LL + N_RR - N_RL - N_LR) over the total of all four.
    """
    counts = (n_ll, n_lr, n_rl, n_rr)
    if any(c < 0 for c in counts):
        raise DomainError("counts must be nonnegative")
    total = sum(counts)
    if total == 0:
        raise DomainError("at least one coincidence is required")
    return (n_ll + n_rr - n_rl - n_lr) / total


# ---------------------------------------------------------------------------
# local hidden variable models


@dataclass(frozen=True, eq=False)
class LhvModel:
    """Factorizing hidden-variable model on a finite weighted grid.

    ``p_a(r, settings, lambdas)`` returns the probability of outcome r at
    each (setting, lambda) combination as an (S, L) array; likewise p_b.
    The factorization is structural: p_a never sees the b setting and
    p_b never sees a.
    """

    lambdas: np.ndarray
    weights: np.ndarray
    p_a: Callable
    p_b: Callable

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lambdas, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != lam.shape[0]:
            raise PreconditionError("weights must match the lambda grid length")
        if np.any(w < -1e-15):
            raise PreconditionError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-10:
            raise PreconditionError("weights must sum to 1 within 1e-10")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "weights", w)


def _settings_matrix(settings) -> np.ndarray:
    if isinstance(settings, UnitVector3):
        return settings.as_array()[None, :]
    arr = np.asarray(settings, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise PreconditionError("settings must be 3-vectors or an (n, 3) array")
    return arr


def _mean_response(model: LhvModel, p, settings: np.ndarray) -> np.ndarray:
    """Abar or Bbar: P(+1) - P(-1), checked against the [0, 1] bounds."""
    plus = np.asarray(p(+1, settings, model.lambdas), dtype=float)
    minus = np.asarray(p(-1, settings, model.lambdas), dtype=float)
    want = (settings.shape[0], model.lambdas.shape[0])
    if plus.shape != want or minus.shape != want:
        raise PreconditionError(f"response table must have shape {want}")
    for tab in (plus, minus):
        if np.any(tab < -1e-12) or np.any(tab > 1.0 + 1e-12):
            raise PreconditionError("response probabilities must lie in [0, 1]")
    return plus - minus


def lhv_expectation(model: LhvModel, a, b):
    """E(a, b) = sum over lambda of f Abar Bbar.

    a and b may be single axes or aligned (n, 3) arrays of settings.
    """
    sa = _settings_matrix(a)
    sb = _settings_matrix(b)
    if sa.shape[0] != sb.shape[0]:
        raise PreconditionError("a and b setting batches must align")
    abar = _mean_response(model, model.p_a, sa)
    bbar = _mean_response(model, model.p_b, sb)
    e = (abar * bbar) @ model.weights
    return float(e[0]) if e.size == 1 and isinstance(a, UnitVector3) else e


def lhv_chsh_audit(model: LhvModel, a, b, a2, b2) -> tuple:
    """CHSH value(s) of a hidden-variable model and the K <= 2 verdict.

    Each setting may be an axis or an (n, 3) batch of axes; batches give
    a K array and a verdict covering every quadruple.
    """
    e_ab = lhv_expectation(model, a, b)
    e_ab2 = lhv_expectation(model, a, b2)
    e_a2b = lhv_expectation(model, a2, b)
    e_a2b2 = lhv_expectation(model, a2, b2)
    k = np.abs(e_ab + e_ab2 + e_a2b - e_a2b2)
    satisfied = bool(np.all(k <= 2.0 + CHSH_BOUND_TOL))
    if np.ndim(k) == 0 or (np.size(k) == 1 and isinstance(a, UnitVector3)):
        return float(np.asarray(k).reshape(-1)[0]), satisfied
    return k, satisfied


def random_lhv_model(rng: RandomStream, n_lambda: int = 16) -> LhvModel:
    """Random smooth factorizing model for bound sweeps.

    Each side responds through a logistic curve in the setting-lambda
    overlap with coefficients fixed at construction; P(-1) = 1 - P(+1),
    so the response bounds hold by construction.
    """
    if n_lambda < 1:
        raise DomainError("need at least one lambda point")
    lams = sample_isotropic_directions(rng, n_lambda)
    w = rng.uniform(size=n_lambda) + 1e-3
    w = w / w.sum()

    def make_response(c0, c1, c2):
        def p(r, settings, lambdas):
            t = settings @ lambdas.T
            plus = 1.0 / (1.0 + np.exp(-(c0 + c1 * t + c2 * t * t)))
            return plus if r > 0 else 1.0 - plus

        return p

    ca = 4.0 * rng.uniform(size=3) - 2.0
    cb = 4.0 * rng.uniform(size=3) - 2.0
    return LhvModel(lams, w, make_response(*ca), make_response(*cb))


def sign_anticorrelated_model(rng: RandomStream, n_lambda: int = 64) -> LhvModel:
    """Deterministic model with Abar = sign(lambda.a) and Bbar = -Abar shape."""
    lams = sample_isotropic_directions(rng, n_lambda)
    w = np.full(n_lambda, 1.0 / n_lambda)

    def p_a(r, settings, lambdas):
        up = (settings @ lambdas.T) >= 0.0
        return np.where(up, 1.0, 0.0) if r > 0 else np.where(up, 0.0, 1.0)

    def p_b(r, settings, lambdas):
        up = (settings @ lambdas.T) >= 0.0
        return np.where(up, 0.0, 1.0) if r > 0 else np.where(up, 1.0, 0.0)

    return LhvModel(lams, w, p_a, p_b)


def semiclassical_lhv_model(n_polar: int = 32, n_azimuth: int = 32) -> LhvModel:
    """The independent-evolution model as an explicit hidden-variable grid.

    lambda is the initial spin direction, integrated with Gauss-Legendre
    nodes in the polar cosine and a uniform azimuth grid; the product
    responses (1 + r sigma.a)/2 and (1 - r sigma.b)/2 then average to the
    reduced correlation -cos(theta)/3 exactly at quadrature order 2.
    """
    nodes, wts = np.polynomial.legendre.leggauss(n_polar)
    phis = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    ct, ph = np.meshgrid(nodes, phis, indexing="ij")
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
    lams = np.column_stack(
        [(st * np.cos(ph)).ravel(), (st * np.sin(ph)).ravel(), ct.ravel()]
    )
    w = np.outer(wts / 2.0, np.full(n_azimuth, 1.0 / n_azimuth)).ravel()

    def p_a(r, settings, lambdas):
        return 0.5 * (1.0 + (1 if r > 0 else -1) * settings @ lambdas.T)

    def p_b(r, settings, lambdas):
        return 0.5 * (1.0 - (1 if r > 0 else -1) * settings @ lambdas.T)

    return LhvModel(lams, w, p_a, p_b)


# ---------------------------------------------------------------------------
# bipartite coefficients and no-signaling audits

_MAX_BIPARTITE_DIM = 64


@dataclass(frozen=True, eq=False)
class BipartiteCoefficients:
    """Coefficient matrix a_lk of a symmetrized two-particle expansion.

    C is the overall normalization constant; the convention here is
    C^2 sum |a_lk|^2 = 1, which makes C^2 |a_mn|^2 the joint detection
    probability directly.
    """

    a: np.ndarray
    C: float

    def __post_init__(self):
        a = np.array(self.a, dtype=complex)
        if a.ndim != 2:
            raise PreconditionError("coefficients must form a matrix")
        if a.shape[0] > _MAX_BIPARTITE_DIM or a.shape[1] > _MAX_BIPARTITE_DIM:
            raise PreconditionError(f"dimensions capped at {_MAX_BIPARTITE_DIM}")
        if not self.C > 0:
            raise PreconditionError("normalization constant must be positive")
        total = float(self.C**2 * np.sum(np.abs(a) ** 2))
        if abs(total - 1.0) > 1e-10:
            raise PreconditionError(
                f"C^2 sum|a|^2 = {total!r}, must equal 1 within 1e-10"
            )
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def normalized(cls, matrix) -> "BipartiteCoefficients":
        m = np.array(matrix, dtype=complex)
        total = float(np.sum(np.abs(m) ** 2))
        if total <= 0:
            raise DomainError("cannot normalize a zero coefficient matrix")
        return cls(m, 1.0 / math.sqrt(total))


def singlet_coefficients() -> BipartiteCoefficients:
    """The 2x2 singlet matrix [[0, 1], [-1, 0]]/sqrt(2) with C = 1."""
    inv = 1.0 / math.sqrt(2.0)
    return BipartiteCoefficients(np.array([[0.0, inv], [-inv, 0.0]]), 1.0)


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise PreconditionError(f"unitary must be {dim}x{dim} for these coefficients")
    dev = float(np.max(np.abs(u.conj().T @ u - np.eye(dim))))
    if dev > 1e-12:
        raise PreconditionError(f"matrix is not unitary (max deviation {dev:.3e})")
    return u


def basis_change(coeffs: BipartiteCoefficients, u) -> BipartiteCoefficients:
    """New coefficients b_lk = sum_j a_jk U_jl under an apparatus basis change."""
    u = _check_unitary(u, coeffs.a.shape[0])
    return BipartiteCoefficients(u.T @ coeffs.a, coeffs.C)


def bipartite_joint(coeffs: BipartiteCoefficients, m: int, n: int) -> float:
    """Joint probability C^2 |a_mn|^2 of detecting packet pair (m, n)."""
    rows, cols = coeffs.a.shape
    if not (0 <= m < rows and 0 <= n < cols):
        raise DomainError(f"index ({m}, {n}) outside the {rows}x{cols} matrix")
    return float(coeffs.C**2 * abs(coeffs.a[m, n]) ** 2)


def _pair_inner(s1: np.ndarray, s2: np.ndarray) -> complex:
    # two-particle states as (2, L, K) stacks over the orthogonal blocks
    # w_l(1)u_k(2) and u_k(1)w_l(2); separated packets keep the blocks
    # orthogonal, so the inner product is a plain componentwise sum
    return complex(np.sum(s1 * np.conj(s2)))


def no_signaling_audit(
    coeffs: BipartiteCoefficients, u, n: int, sign: int = +1
) -> tuple:
    """Probability of detecting packet u_n on side 2, three independent ways.

    Route 1 sums the joint law over side 1 in the original basis. Route 2
    repeats the sum after the side-1 apparatus basis change U. Route 3
    removes the apparatus entirely and projects the symmetrized state onto
    the two exchange components belonging to u_n. Returns
    (p_with_apparatus, p_changed_apparatus, p_no_apparatus, max_deviation).
    """
    rows, cols = coeffs.a.shape
    if not 0 <= n < cols:
        raise DomainError(f"index {n} outside the {cols} columns")
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")

    p_with = float(coeffs.C**2 * np.sum(np.abs(coeffs.a[:, n]) ** 2))

    changed = basis_change(coeffs, u)
    p_changed = float(changed.C**2 * np.sum(np.abs(changed.a[:, n]) ** 2))

    psi = np.stack([coeffs.C * coeffs.a, sign * coeffs.C * coeffs.a])
    p_no = 0.0
    for block in (0, 1):
        target = np.zeros_like(psi)
        target[block, :, n] = coeffs.a[:, n]
        norm_sq = float(np.sum(np.abs(target) ** 2))
        if norm_sq > 0.0:
            p_no += 0.5 * abs(_pair_inner(psi, target)) ** 2 / norm_sq

    probs = (p_with, p_changed, p_no)
    max_dev = max(abs(x - y) for x in probs for y in probs)
    return p_with, p_changed, p_no, max_dev
