"""Command-line front end.

One executable, one subcommand per experiment family. Everything a run
needs is on the command line or in a JSON config whose keys mirror the
flags; flags win over config. Output is a single JSON record (or CSV for
the distribution-shaped commands) with the resolved parameters embedded,
so a record is reproducible from itself.

Exit codes: 0 on success, 1 for invalid input, 2 for numerical failure
or a module-level domain rejection.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np
from scipy import stats as scipy_stats
from scipy.constants import c as C_LIGHT
from scipy.constants import e as E_CHARGE
from scipy.constants import h as H_PLANCK
from scipy.constants import hbar as HBAR
from scipy.constants import k as K_BOLTZMANN
from scipy.constants import proton_mass as M_PROTON

from . import actionprob, configspace, numkit, quantstat, spincorr, wavepacket
from .errors import PacketLabError

__all__ = ["main", "run", "CliError"]


class CliError(Exception):
    """Bad invocation: unknown flag, malformed value, conflicting options."""


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit on usage errors; route them through the
    # single exit-code policy instead
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# canonical rendering

_JSON_SEP_ITEM = ", "
_JSON_SEP_KEY = ": "


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    if v == 0.0:
        return "0"
    return format(v, ".17g")


def _render_json(value) -> str:
    """Deterministic JSON: 17 significant digits, insertion-ordered keys."""
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt_float(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _render_json(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + _JSON_SEP_ITEM.join(_render_json(x) for x in value) + "]"
    if isinstance(value, dict):
        items = (
            json.dumps(str(k)) + _JSON_SEP_KEY + _render_json(v)
            for k, v in value.items()
        )
        return "{" + _JSON_SEP_ITEM.join(items) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v))
    return str(v)


def _render_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# flag value converters; each takes the raw CLI/config value plus the flag
# name and either returns the typed value or raises CliError naming the flag


def _as_int(raw, name: str) -> int:
    if isinstance(raw, bool):
        raise CliError(f"parameter {name}: expected an integer, got a boolean")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        if raw != int(raw):
            raise CliError(f"parameter {name}: expected an integer, got {raw!r}")
        return int(raw)
    try:
        return int(str(raw).strip(), 10)
    except ValueError:
        raise CliError(f"parameter {name}: {raw!r} is not an integer") from None


def _u64(raw, name: str) -> int:
    value = _as_int(raw, name)
    if not 0 <= value < 2**64:
        raise CliError(f"parameter {name}: must fit in an unsigned 64-bit integer")
    return value


def _posint(raw, name: str) -> int:
    value = _as_int(raw, name)
    if value < 1:
        raise CliError(f"parameter {name}: must be a positive integer")
    return value


def _flt(raw, name: str) -> float:
    if isinstance(raw, bool):
        raise CliError(f"parameter {name}: expected a number, got a boolean")
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise CliError(f"parameter {name}: {raw!r} is not a number") from None


def _posflt(raw, name: str) -> float:
    value = _flt(raw, name)
    if not value > 0:
        raise CliError(f"parameter {name}: must be positive")
    return value


def _boolean(raw, name: str) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise CliError(f"parameter {name}: {raw!r} is not a boolean")


def _text(raw, name: str) -> str:
    if not isinstance(raw, str):
        raise CliError(f"parameter {name}: expected a string")
    return raw


def _split_items(raw, name: str) -> list:
    if isinstance(raw, (list, tuple)):
        return list(raw)
    if isinstance(raw, str):
        items = [p.strip() for p in raw.split(",")]
        if any(p == "" for p in items):
            raise CliError(f"parameter {name}: empty entry in the list")
        return items
    raise CliError(f"parameter {name}: expected a comma-separated list")


def _float_list(count: int = None):
    def conv(raw, name: str) -> list:
        vals = [_flt(x, name) for x in _split_items(raw, name)]
        if count is not None and len(vals) != count:
            raise CliError(f"parameter {name}: expected exactly {count} values")
        return vals

    return conv


def _int_list(raw, name: str) -> list:
    return [_as_int(x, name) for x in _split_items(raw, name)]


def _choice(*options: str):
    def conv(raw, name: str) -> str:
        text = str(raw).strip().lower()
        if text not in options:
            raise CliError(
                f"parameter {name}: {raw!r} is not one of {', '.join(options)}"
            )
        return text

    return conv


# ---------------------------------------------------------------------------
# command parameter tables: (flag, converter, default, help)

_GLOBAL_FLAGS = [
    ("seed", _u64, 0, "base RNG seed (unsigned 64-bit)"),
    ("shards", _posint, 1, "independent Monte Carlo shards, merged after the run"),
    ("out", _text, None, "write the record to this path instead of stdout"),
    ("format", _choice("json", "csv"), "json", "output format"),
    ("config", _text, None, "JSON file whose keys mirror the flags"),
]

_FLAGS = {
    "bell": [
        ("model", _choice("qm", "sc"), "qm", "pair model"),
        ("angles-deg", _float_list(2), None, "coplanar analyser angles a,b"),
        ("a", _float_list(3), None, "analyser direction a as x,y,z"),
        ("b", _float_list(3), None, "analyser direction b as x,y,z"),
    ],
    "chsh": [
        ("model", _choice("qm", "sc"), "qm", "pair model"),
        ("angles-deg", _float_list(4), None, "coplanar angles a,b,a',b'"),
        ("a", _float_list(3), None, "direction a as x,y,z"),
        ("b", _float_list(3), None, "direction b as x,y,z"),
        ("a2", _float_list(3), None, "direction a' as x,y,z"),
        ("b2", _float_list(3), None, "direction b' as x,y,z"),
        ("mc", _posint, None, "also estimate K from this many pairs per setting"),
    ],
    "sample": [
        ("model", _choice("qm", "sc"), "qm", "pair model"),
        ("angles-deg", _float_list(2), None, "coplanar analyser angles a,b"),
        ("a", _float_list(3), None, "analyser direction a as x,y,z"),
        ("b", _float_list(3), None, "analyser direction b as x,y,z"),
        ("n", _posint, 100000, "number of simulated pairs"),
    ],
    "lhv": [
        (
            "family",
            _choice("random", "semiclassical", "sign"),
            "random",
            "hidden-variable model family",
        ),
        ("models", _posint, 100, "models to draw (random and sign families)"),
        ("settings", _posint, 100, "setting quadruples per model"),
        ("n-lambda", _posint, 16, "hidden-variable grid size per model"),
    ],
    "nosignal": [
        ("trials", _posint, 200, "random state/apparatus trials"),
        ("max-dim", _posint, 8, "largest expansion dimension per side"),
    ],
    "reduce": [
        ("coeffs", _float_list(), None, "expansion coefficients (normalized)"),
        ("mode", _choice("window", "pick"), "window", "reduction mode"),
        ("window", _int_list, None, "indices kept by the reduction"),
    ],
    "condspace": [
        ("centers", _float_list(2), [-1.0, 1.0], "packet centers"),
        ("sigmas", _float_list(2), [0.7, 0.7], "packet widths"),
        ("k0", _float_list(2), [0.0, 0.0], "packet carrier wavenumbers"),
        ("grid", _float_list(3), [-8.0, 8.0, 161], "grid as start,stop,points"),
        ("x2", _flt, 1.0, "conditioning position of the second particle"),
        ("symmetry", _choice("none", "bose", "fermi"), "bose", "exchange symmetry"),
    ],
    "actionprob": [
        ("width-ratio", _posflt, 100.0, "packet width over scatterer width"),
        ("probes", _posint, 9, "scatterer positions probed across the packet"),
        ("finals", _posint, 8, "final packets summed per probe"),
    ],
    "packet spread": [
        ("mass-kg", _posflt, M_PROTON, "particle mass"),
        ("kinetic-mev", _posflt, 6.0, "kinetic energy"),
        ("width0", _posflt, None, "initial standard-deviation width (m)"),
        ("full-length", _posflt, None, "initial full length 2*width0 (m)"),
        ("distance", _posflt, 0.05, "flight distance (m)"),
        (
            "direction",
            _choice("longitudinal", "transverse"),
            "longitudinal",
            "spreading direction relative to the motion",
        ),
    ],
    "packet coherence": [
        ("sigma", _posflt, 1.0, "Gaussian width"),
        ("points", _posint, 2048, "grid points"),
        ("span-sigmas", _posflt, 8.0, "half grid span in units of sigma"),
        ("shifts", _float_list(), None, "probe shifts (default 0.5, 1, 2 sigma)"),
    ],
    "packet accum": [
        ("threshold-ev", _posflt, 2.18, "energy the site must soak up"),
        ("flux", _posflt, 3.5e-13, "incident energy flux (W/m^2)"),
        ("area", _posflt, 1e-18, "absorbing cross-section (m^2)"),
    ],
    "packet sterngerlach": [
        ("mu-z", _flt, wavepacket.BOHR_MAGNETON, "magnetic moment component (J/T)"),
        ("grad-b", _flt, 1e3, "field gradient (T/m)"),
        ("dt", _posflt, 7e-5, "transit time through the gradient (s)"),
        ("p-y", _posflt, 8.96e-23, "forward momentum (kg m/s)"),
    ],
    "cavity": [
        ("temperature", _posflt, 5800.0, "cavity temperature (K)"),
        ("volume", _posflt, 1.0, "cavity volume (m^3)"),
        (
            "statistics",
            _choice("bose", "fermi", "boltzmann"),
            "bose",
            "occupancy statistics",
        ),
        ("mu", _flt, 0.0, "chemical potential (J)"),
        ("bins", _posint, 200, "log-spaced frequency bins"),
        ("x-lo", _posflt, 1e-3, "lowest h nu / k T"),
        ("x-hi", _posflt, 40.0, "highest h nu / k T"),
        ("polarizations", _posint, 2, "polarizations per mode (1 or 2)"),
        ("entropy", _boolean, False, "also report entropy and its derivatives"),
    ],
    "counts": [
        (
            "stat",
            _choice("bose", "fermi", "boltzmann"),
            "bose",
            "occupancy statistics",
        ),
        ("g", _posint, 1, "cells per packet"),
        ("mbar", _posflt, None, "mean detector count (g eta s_bar)"),
        ("sbar", _posflt, None, "mean occupancy per cell"),
        ("eta", _posflt, 1.0, "detection efficiency in (0, 1]"),
        ("mmax", _posint, None, "truncate the reported distribution at this count"),
        ("mc", _posint, None, "also sample this many Monte Carlo counts"),
    ],
    "balance": [
        ("trials", _posint, 1000, "random detailed-balance parameter sets"),
        ("broken-trials", _posint, 100, "trials with a mismatched second constant"),
        (
            "temperatures",
            _float_list(),
            [250.0, 300.0, 1000.0, 5800.0],
            "Einstein-balance temperatures (K)",
        ),
        (
            "frequencies",
            _float_list(),
            [1e12, 1e13, 1e14, 1e15],
            "Einstein-balance frequencies (Hz)",
        ),
    ],
    "vonlaue": [
        ("area", _posflt, 1e-4, "bundle cross-section (m^2)"),
        ("length", _posflt, 1.0, "bundle length (m)"),
        ("dnu", _posflt, 1e9, "bundle spectral width (Hz)"),
        ("focal-area", _posflt, 1e-8, "focal spot area (m^2)"),
        ("packet-dy", _posflt, 1e-3, "packet length (m)"),
        ("packet-dnu", _posflt, None, "packet spectral width (Hz)"),
        ("r", _posflt, 2.0 * math.pi, "extension convention Dy Dnu = r c / 4 pi"),
    ],
    "regress": [],
}

# distribution-shaped commands may emit CSV
_CSV_COMMANDS = frozenset({"condspace", "cavity", "counts"})

_PACKET_SUBCOMMANDS = ("spread", "coherence", "accum", "sterngerlach")

_HELP = {
    "bell": "joint outcome table for one pair of analyser settings",
    "chsh": "CHSH combination K, closed form and optionally Monte Carlo",
    "sample": "simulate coincidence counts for one pair of settings",
    "lhv": "audit hidden-variable model families against the CHSH bound",
    "nosignal": "remote-measurement invariance of one-side probabilities",
    "reduce": "reduce an eigenfunction expansion (window or single pick)",
    "condspace": "two-particle configuration-space conditional density",
    "actionprob": "factorization audit of first-order transition probabilities",
    "packet spread": "relativistic wavepacket spreading over a flight",
    "packet coherence": "autocorrelation profile and coherence length",
    "packet accum": "classical energy-accumulation time at an absorber",
    "packet sterngerlach": "deflection angle in a field gradient",
    "cavity": "thermal mode occupation spectrum of a cavity",
    "counts": "detector count distribution from g cells",
    "balance": "detailed-balance and Einstein-coefficient identities",
    "vonlaue": "degree-of-freedom count of a bounded ray bundle",
    "regress": "fixed-seed regression record over all modules",
}


# ---------------------------------------------------------------------------
# run context


class _Run:
    """Resolved parameters plus the RNG and warning plumbing for one call."""

    def __init__(self, command: str, params: dict, stderr):
        self.command = command
        self.params = params
        self.stderr = stderr

    def warn(self, message: str):
        print(f"warning: {message}", file=self.stderr)

    def stream(self, stream_id: int = 0) -> numkit.RandomStream:
        return numkit.RandomStream(self.params["seed"], stream_id=stream_id)

    def shard_plan(self, n: int) -> list:
        """[(shard_id, size), ...] splitting n draws over the shards."""
        shards = self.params["shards"]
        base, extra = divmod(n, shards)
        plan = [(i, base + (1 if i < extra else 0)) for i in range(shards)]
        return [(i, size) for i, size in plan if size > 0]


def _axis_from(values, name: str, run: _Run) -> numkit.UnitVector3:
    arr = np.array(values, dtype=float)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise CliError(f"parameter {name}: zero vector cannot define a direction")
    if abs(norm - 1.0) > 1e-6:
        run.warn(f"direction {name} renormalized from |v| = {norm:.8g}")
    arr = arr / norm
    return numkit.UnitVector3(arr[0], arr[1], arr[2])


def _settings_from(run: _Run, vec_keys: tuple, default_angles: tuple) -> list:
    """Analyser directions from vector flags or coplanar angles."""
    p = run.params
    given = [k for k in vec_keys if p[k] is not None]
    if given:
        if p["angles-deg"] is not None:
            raise CliError("give either --angles-deg or direction vectors, not both")
        missing = [k for k in vec_keys if p[k] is None]
        if missing:
            raise CliError(f"missing direction vectors: {', '.join(missing)}")
        return [_axis_from(p[k], k, run) for k in vec_keys]
    angles = p["angles-deg"] if p["angles-deg"] is not None else list(default_angles)
    return [spincorr.coplanar_axis(math.radians(a)) for a in angles]


def _pair_model(name: str) -> spincorr.PairModel:
    if name == "qm":
        return spincorr.PairModel.qm_singlet()
    return spincorr.PairModel.semiclassical()


def _standard_normals(rng: numkit.RandomStream, n: int) -> np.ndarray:
    """n Box-Muller normals; consumes 2*ceil(n/2) uniforms."""
    m = (n + 1) // 2
    u1 = 1.0 - rng.uniform(size=m)  # (0, 1], keeps the log finite
    u2 = rng.uniform(size=m)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2.0 * np.pi * u2),
                        radius * np.sin(2.0 * np.pi * u2)])
    return z[:n]


def _random_unitary(rng: numkit.RandomStream, dim: int) -> np.ndarray:
    """Haar-distributed unitary via QR with the phase convention fixed."""
    z = _standard_normals(rng, dim * dim) + 1j * _standard_normals(rng, dim * dim)
    q, r = np.linalg.qr(z.reshape(dim, dim) / math.sqrt(2.0))
    diag = np.diagonal(r).copy()
    diag[diag == 0] = 1.0
    return q * (diag / np.abs(diag))


def _randint(rng: numkit.RandomStream, lo: int, hi: int) -> int:
    """Uniform integer in [lo, hi], one uniform consumed."""
    return min(lo + int(float(rng.uniform()) * (hi - lo + 1)), hi)


# ---------------------------------------------------------------------------
# handlers; each returns (fields, csv_payload)


def _cmd_bell(run: _Run):
    p = run.params
    model = _pair_model(p["model"])
    a, b = _settings_from(run, ("a", "b"), (0.0, 45.0))
    table = spincorr.joint_table(model, a, b)
    fields = {
        "a": list(a.as_array()),
        "b": list(b.as_array()),
        "joint": {"pp": table.pp, "pm": table.pm, "mp": table.mp, "mm": table.mm},
        "expectation": table.expectation,
        "marginal_b_plus": spincorr.marginal(model, a, b, +1),
        "marginal_b_minus": spincorr.marginal(model, a, b, -1),
    }
    return fields, None


def _cmd_chsh(run: _Run):
    p = run.params
    model = _pair_model(p["model"])
    a, b, a2, b2 = _settings_from(
        run, ("a", "b", "a2", "b2"), (0.0, 45.0, 90.0, -45.0)
    )
    fields = {
        "settings": [list(v.as_array()) for v in (a, b, a2, b2)],
        "K": spincorr.chsh(model, a, b, a2, b2),
    }
    n = p["mc"]
    if n is not None:
        plan = run.shard_plan(n)
        streams = [run.stream(sid) for sid, _ in plan]
        estimates = []
        for pair in ((a, b), (a, b2), (a2, b), (a2, b2)):
            totals = np.zeros(4, dtype=np.int64)
            # each shard stream advances through all four settings, so every
            # setting sees fresh draws and the shard merge stays commutative
            for (_, size), rng in zip(plan, streams):
                counts = spincorr.sample_pair_counts(model, pair[0], pair[1], size, rng)
                totals += np.asarray(counts, dtype=np.int64)
            estimates.append(spincorr.coincidence_expectation(*map(int, totals)))
        fields["K_mc"] = abs(estimates[0] + estimates[1] + estimates[2] - estimates[3])
        fields["samples_per_setting"] = n
        fields["three_sigma"] = 3.0 * math.sqrt(
            sum((1.0 - e * e) / n for e in estimates)
        )
    return fields, None


def _cmd_sample(run: _Run):
    p = run.params
    model = _pair_model(p["model"])
    a, b = _settings_from(run, ("a", "b"), (0.0, 45.0))
    n = p["n"]
    totals = np.zeros(4, dtype=np.int64)
    for sid, size in run.shard_plan(n):
        counts = spincorr.sample_pair_counts(model, a, b, size, run.stream(sid))
        totals += np.asarray(counts, dtype=np.int64)
    estimate = spincorr.coincidence_expectation(*map(int, totals))
    fields = {
        "n_pp": int(totals[0]),
        "n_pm": int(totals[1]),
        "n_mp": int(totals[2]),
        "n_mm": int(totals[3]),
        "samples": n,
        "expectation_estimate": estimate,
        "three_sigma": 3.0 * math.sqrt((1.0 - estimate**2) / n),
        "expectation_closed_form": spincorr.expectation(model, a, b),
    }
    return fields, None


def _cmd_lhv(run: _Run):
    p = run.params
    family = p["family"]
    rng = run.stream(0)
    n_settings = p["settings"]
    a = numkit.sample_isotropic_directions(rng, n_settings)
    b = numkit.sample_isotropic_directions(rng, n_settings)
    a2 = numkit.sample_isotropic_directions(rng, n_settings)
    b2 = numkit.sample_isotropic_directions(rng, n_settings)

    fields = {"family": family, "settings_per_model": n_settings}
    if family == "semiclassical":
        models = [spincorr.semiclassical_lhv_model()]
        bound = 4.0 / 3.0
        canonical = [spincorr.coplanar_axis(math.radians(d)) for d in (0, 45, 90, -45)]
        fields["canonical_K"] = float(spincorr.lhv_chsh_audit(models[0], *canonical)[0])
    elif family == "sign":
        models = [
            spincorr.sign_anticorrelated_model(rng, p["n-lambda"])
            for _ in range(p["models"])
        ]
        bound = 2.0
    else:
        models = [
            spincorr.random_lhv_model(rng, p["n-lambda"]) for _ in range(p["models"])
        ]
        bound = 2.0

    max_k = 0.0
    for model in models:
        k_vals = spincorr.lhv_chsh_audit(model, a, b, a2, b2)[0]
        max_k = max(max_k, float(np.max(k_vals)))
    fields["models"] = len(models)
    fields["max_K"] = max_k
    fields["bound"] = bound
    fields["satisfied"] = bool(max_k <= bound + spincorr.CHSH_BOUND_TOL)
    return fields, None


def _cmd_nosignal(run: _Run):
    p = run.params
    if p["max-dim"] < 2:
        raise CliError("parameter max-dim: need at least 2")
    rng = run.stream(0)
    worst = 0.0
    for trial in range(p["trials"]):
        rows = _randint(rng, 2, p["max-dim"])
        cols = _randint(rng, 2, p["max-dim"])
        matrix = (
            _standard_normals(rng, rows * cols)
            + 1j * _standard_normals(rng, rows * cols)
        ).reshape(rows, cols)
        coeffs = spincorr.BipartiteCoefficients.normalized(matrix)
        u = _random_unitary(rng, rows)
        n_col = _randint(rng, 0, cols - 1)
        sign = +1 if trial % 2 == 0 else -1
        dev = spincorr.no_signaling_audit(coeffs, u, n_col, sign=sign)[3]
        worst = max(worst, dev)
    fields = {
        "trials": p["trials"],
        "max_dim": p["max-dim"],
        "max_deviation": worst,
        "satisfied": bool(worst < 1e-10),
    }
    return fields, None


def _cmd_reduce(run: _Run):
    p = run.params
    if p["coeffs"] is None:
        raise CliError("parameter coeffs is required")
    arr = np.array(p["coeffs"], dtype=float)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise CliError("parameter coeffs: all coefficients are zero")
    if abs(norm - 1.0) > 1e-6:
        run.warn(f"coefficients renormalized from |c| = {norm:.8g}")
    coeffs = configspace.ExpansionCoefficients(arr / norm)

    window = p["window"]
    if p["mode"] == "window":
        if window is None:
            raise CliError("window mode needs --window")
        out = configspace.reduce_expansion(coeffs, window=window)
        picked = None
    else:
        out = configspace.reduce_expansion(coeffs, window=window, rng=run.stream(0))
        picked = int(np.argmax(out.probabilities()))

    fields = {
        "mode": p["mode"],
        "input_probabilities": coeffs.probabilities(),
        "output_real": np.real(out.values),
        "output_imag": np.imag(out.values),
        "output_probabilities": out.probabilities(),
    }
    if window is not None:
        fields["window_mass"] = float(np.sum(coeffs.probabilities()[sorted(set(window))]))
    if picked is not None:
        fields["picked"] = picked
    return fields, None


def _cmd_condspace(run: _Run):
    p = run.params
    start, stop, num_raw = p["grid"]
    num = _as_int(num_raw, "grid")
    if num < 2:
        raise CliError("parameter grid: need at least 2 points")
    if not stop > start:
        raise CliError("parameter grid: stop must exceed start")
    spacing = (stop - start) / (num - 1)

    factors = [
        numkit.sampled_gaussian(center, sigma, start, spacing, num, k0=k0).normalized()
        for center, sigma, k0 in zip(p["centers"], p["sigmas"], p["k0"])
    ]
    psi = configspace.ManyBodyWavefunction.from_product(factors)
    convention = "marginal"
    if p["symmetry"] != "none":
        psi = configspace.symmetrize(psi, +1 if p["symmetry"] == "bose" else -1)
        convention = "exchange"

    conditional = configspace.conditional_probability(psi, p["x2"])
    if convention == "exchange":
        density = configspace.one_particle_density(psi)
    else:
        density = np.sum(np.abs(psi.tensor) ** 2, axis=1) * spacing
    is_product, residual = configspace.product_form_test(psi)

    i2 = min(max(int(round((p["x2"] - start) / spacing)), 0), num - 1)
    grid = start + spacing * np.arange(num)
    fields = {
        "symmetry": p["symmetry"],
        "grid_start": start,
        "grid_spacing": spacing,
        "points": num,
        "x2_snapped": float(grid[i2]),
        "conditional_integral": float(np.sum(conditional) * spacing),
        "product_form": is_product,
        "schmidt_residual": residual,
        "density_convention": convention,
        "conditional": conditional,
        "density": density,
    }
    rows = list(zip(grid, conditional, density))
    return fields, (("x", "conditional", "density"), rows)


def _cmd_actionprob(run: _Run):
    p = run.params
    setup, scatterer, centers, finals = actionprob.audit_scenario(
        p["width-ratio"], p["probes"], p["finals"]
    )
    kappa, spread = actionprob.action_ratio_audit(setup, scatterer, centers, finals)
    w_center = sum(
        actionprob.first_order_transition(setup, scatterer, f) for f in finals
    )
    interactions, efficiency = actionprob.efficiency_decomposition(
        w_center, setup.psi_i.norm_sq(), kappa * (setup.t - setup.t0)
    )
    fields = {
        "width_ratio": actionprob.width_ratio(setup, scatterer),
        "probes": p["probes"],
        "finals": p["finals"],
        "kappa": kappa,
        "max_relative_spread": spread,
        "w_total_center": w_center,
        "interaction_number": interactions,
        "efficiency": efficiency,
    }
    return fields, None


def _cmd_packet_spread(run: _Run):
    p = run.params
    if p["width0"] is not None and p["full-length"] is not None:
        raise CliError("give either --width0 or --full-length, not both")
    if p["full-length"] is not None:
        width0 = 0.5 * p["full-length"]
    elif p["width0"] is not None:
        width0 = p["width0"]
    else:
        width0 = 2e-15

    kinetic = p["kinetic-mev"] * 1e6 * E_CHARGE
    mc2 = p["mass-kg"] * C_LIGHT**2
    pc = math.sqrt(kinetic * (kinetic + 2.0 * mc2))
    k0 = pc / (HBAR * C_LIGHT)
    disp = wavepacket.Dispersion(p["mass-kg"])
    result = wavepacket.spread_after_flight(
        disp, k0, width0, p["distance"], p["direction"]
    )
    fields = {
        "mass_kg": p["mass-kg"],
        "kinetic_mev": p["kinetic-mev"],
        "k0": k0,
        "width0": width0,
        "initial_full_length": 2.0 * width0,
        "distance": p["distance"],
        "direction": p["direction"],
    }
    fields.update(result)
    fields["final_full_length"] = 2.0 * result["final_width"]
    return fields, None


def _cmd_packet_coherence(run: _Run):
    p = run.params
    sigma = p["sigma"]
    num = p["points"]
    half = p["span-sigmas"] * sigma
    spacing = 2.0 * half / (num - 1)
    psi = numkit.sampled_gaussian(0.0, sigma, -half, spacing, num).normalized()
    shifts = p["shifts"] if p["shifts"] is not None else [0.5 * sigma, sigma, 2 * sigma]
    gammas, length = wavepacket.coherence_profile(psi, shifts)
    fields = {
        "sigma": sigma,
        "shifts": list(shifts),
        "gamma": list(gammas),
        "coherence_length": length,
        "gaussian_expected": 2.0 * sigma,
    }
    if length is not None:
        fields["ratio_to_gaussian"] = length / (2.0 * sigma)
    return fields, None


def _cmd_packet_accum(run: _Run):
    p = run.params
    t = wavepacket.accumulation_time(
        p["threshold-ev"] * E_CHARGE, p["flux"], p["area"]
    )
    fields = {
        "threshold_ev": p["threshold-ev"],
        "flux": p["flux"],
        "area": p["area"],
        "t_accumulate_s": t,
        "t_accumulate_years": t / (365.25 * 86400.0),
    }
    return fields, None


def _cmd_packet_sterngerlach(run: _Run):
    p = run.params
    alpha = wavepacket.stern_gerlach_deflection(
        p["mu-z"], p["grad-b"], p["dt"], p["p-y"]
    )
    fields = {
        "mu_z": p["mu-z"],
        "grad_b": p["grad-b"],
        "dt": p["dt"],
        "p_y": p["p-y"],
        "alpha_rad": alpha,
        "split_angle_rad": 2.0 * abs(alpha),
        "bohr_magneton": wavepacket.BOHR_MAGNETON,
    }
    return fields, None


def _cmd_cavity(run: _Run):
    p = run.params
    if p["polarizations"] not in (1, 2):
        raise CliError("parameter polarizations: must be 1 or 2")
    statistics = quantstat.Statistics(p["statistics"])
    temperature, volume = p["temperature"], p["volume"]
    photon = statistics is quantstat.Statistics.BOSE and p["mu"] == 0.0
    cavity = quantstat.CavitySpec(
        volume, temperature, p["mu"], 0.0, statistics, photon=photon
    )
    bins = quantstat.photon_bins(
        volume, temperature, p["bins"], p["x-lo"], p["x-hi"], p["polarizations"]
    )
    counts = quantstat.spectral_distribution(cavity, bins)

    kt = K_BOLTZMANN * temperature
    nu = np.array([b.epsilon / H_PLANCK for b in bins])
    x = np.array([b.epsilon / kt for b in bins])
    g = np.array([b.g for b in bins])
    u_density = np.array(
        [
            counts[i] * b.epsilon / (volume * (b.d_epsilon / H_PLANCK))
            for i, b in enumerate(bins)
        ]
    )
    total_energy = float(np.sum(counts * np.array([b.epsilon for b in bins])))
    fields = {
        "statistics": statistics.value,
        "temperature": temperature,
        "volume": volume,
        "bins": p["bins"],
        "polarizations": p["polarizations"],
        "total_modes": float(np.sum(g)),
        "total_number": float(np.sum(counts)),
        "total_energy": total_energy,
        "peak_x": float(x[int(np.argmax(u_density))]),
    }
    if photon and p["polarizations"] == 2:
        a_rad = (
            8.0
            * math.pi**5
            * K_BOLTZMANN**4
            / (15.0 * H_PLANCK**3 * C_LIGHT**3)
        )
        fields["stefan_boltzmann_ratio"] = total_energy / (
            a_rad * temperature**4 * volume
        )
    if p["entropy"]:
        s, ds_de, ds_dn = quantstat.entropy_and_derivatives(cavity, bins)
        fields["entropy"] = s
        fields["ds_de"] = ds_de
        fields["ds_dn"] = ds_dn
        fields["ds_de_times_t"] = ds_de * temperature
    fields["nu"] = nu
    fields["g"] = g
    fields["mean_counts"] = counts

    rows = list(zip(nu, x, g, counts, u_density))
    return fields, (("nu", "x", "g", "count", "energy_density"), rows)


def _cmd_counts(run: _Run):
    p = run.params
    statistics = quantstat.Statistics(p["stat"])
    g = p["g"]
    if (p["mbar"] is None) == (p["sbar"] is None):
        raise CliError("give exactly one of --mbar or --sbar")
    eta = p["eta"]
    if p["sbar"] is not None:
        s_bar = p["sbar"]
    else:
        s_bar = p["mbar"] / (g * eta)
    dist = quantstat.count_distribution(statistics, g, s_bar, eta)
    w = dist.w if p["mmax"] is None else dist.w[: p["mmax"] + 1]

    fields = {
        "statistics": statistics.value,
        "g": g,
        "s_bar": s_bar,
        "eta": eta,
        "m_bar": dist.m_bar,
        "variance": quantstat.count_variance(statistics, g, dist.m_bar),
        "distribution_variance": dist.variance(),
        "w": w,
    }
    n = p["mc"]
    if n is not None:
        if n < 2:
            raise CliError("parameter mc: need at least 2 samples")
        total = 0
        s1 = 0
        s2 = 0
        for sid, size in run.shard_plan(n):
            samples = quantstat.sample_counts(
                statistics, g, s_bar, eta, size, run.stream(sid)
            )
            total += size
            s1 += int(np.sum(samples))
            s2 += int(np.sum(samples.astype(np.int64) ** 2))
        mean = s1 / total
        fields["mc_samples"] = total
        fields["mc_mean"] = mean
        fields["mc_variance"] = (s2 - total * mean**2) / (total - 1)
        mu4 = dist.central_moment(4)
        fields["variance_three_sigma"] = 3.0 * math.sqrt(
            max(mu4 - dist.variance() ** 2, 0.0) / total
        )
    rows = list(zip(range(len(w)), w))
    return fields, (("m", "W"), rows)


def _random_balance_args(rng: numkit.RandomStream) -> dict:
    """One consistent detailed-balance parameter set; consumes 14 uniforms."""
    u = rng.uniform(size=14)
    n = 1 + int(3.0 * u[5])
    n_prime = 1 + int(3.0 * u[6])
    e1i = 0.5 + 1.5 * u[7]
    d1 = -0.4 + 0.8 * u[8]
    e2i = 0.5 + 1.5 * u[9]
    return {
        "a": 0.5 + 1.5 * u[0],
        "a_prime": 0.5 + 1.5 * u[1],
        "b": 0.1 + 1.9 * u[2],
        "c": -1.0 + 2.0 * u[3],
        "c_prime": -1.0 + 2.0 * u[4],
        "n": n,
        "n_prime": n_prime,
        "e1i": e1i,
        "e1f": e1i - d1,
        "e2i": e2i,
        "e2f": e2i + n * d1 / n_prime,
        "s": n + 5.0 * u[10],
        "r": 5.0 * u[11],
        "s_prime": n_prime + 5.0 * u[12],
        "r_prime": 5.0 * u[13],
    }


def _cmd_balance(run: _Run):
    p = run.params
    rng = run.stream(0)
    max_residual = 0.0
    for _ in range(p["trials"]):
        max_residual = max(max_residual, quantstat.balance_residual(**_random_balance_args(rng)))
    broken_min = math.inf
    for _ in range(p["broken-trials"]):
        args = _random_balance_args(rng)
        broken_min = min(
            broken_min, quantstat.balance_residual(**args, b2=1.05 * args["b"])
        )

    einstein_max = 0.0
    for temperature in p["temperatures"]:
        for nu in p["frequencies"]:
            lhs, rhs, _ = quantstat.einstein_balance(temperature, nu, 1.0, 1e9)
            einstein_max = max(einstein_max, abs(lhs - rhs) / lhs)
    a_over_b = [
        [nu, quantstat.einstein_balance(300.0, nu, 1.0, 1e9)[2]]
        for nu in p["frequencies"]
    ]
    fields = {
        "trials": p["trials"],
        "max_residual": max_residual,
        "broken_trials": p["broken-trials"],
        "broken_min_residual": broken_min,
        "einstein_max_residual": einstein_max,
        "a_over_b": a_over_b,
    }
    return fields, None


def _cmd_vonlaue(run: _Run):
    p = run.params
    f_count, n1, n2, n3, ratio = quantstat.vonlaue_dof(
        p["area"],
        p["length"],
        p["dnu"],
        p["focal-area"],
        p["packet-dy"],
        p["packet-dnu"],
        p["r"],
    )
    fields = {
        "field_dof": f_count,
        "n_spectral": n1,
        "n_transverse": n2,
        "n_longitudinal": n3,
        "packet_product_over_field_dof": ratio,
        "r": p["r"],
    }
    return fields, None


# fixed-seed regression target values; each literal was computed away from
# the code path it checks
_REGRESS_TWO_SQRT_TWO = 2.8284271247461903
_REGRESS_SC_K = 0.9428090415820635
_REGRESS_T_ACC = 997927160605.7142
_REGRESS_PLANCK_PEAK = 2.8214393721220787
_REGRESS_MODE_COUNT = 1.165971040577118e15
_REGRESS_A_OVER_B = 3.0903223630929913e-13
_REGRESS_BOHR_MAGNETON = 9.2740100783e-24


def _cmd_regress(run: _Run):
    checks = []

    def add(name, value, expected, tol, mode="abs"):
        value = float(value)
        if mode == "abs":
            ok = abs(value - expected) <= tol
        elif mode == "rel":
            ok = abs(value - expected) <= tol * abs(expected)
        elif mode == "le":
            ok = value <= expected + tol
        else:  # "ge"
            ok = value >= expected - tol
        checks.append(
            {
                "name": name,
                "value": value,
                "expected": expected,
                "tol": tol,
                "mode": mode,
                "ok": bool(ok),
            }
        )

    qm = spincorr.PairModel.qm_singlet()
    sc = spincorr.PairModel.semiclassical()
    axes4 = [spincorr.coplanar_axis(math.radians(d)) for d in (0.0, 45.0, 90.0, -45.0)]

    add("chsh_qm_closed", spincorr.chsh(qm, *axes4), _REGRESS_TWO_SQRT_TWO, 1e-9)
    add("chsh_sc_closed", spincorr.chsh(sc, *axes4), _REGRESS_SC_K, 1e-12)

    n_mc = 200000
    rng = run.stream(0)
    estimates = []
    for pair in ((axes4[0], axes4[1]), (axes4[0], axes4[3]),
                 (axes4[2], axes4[1]), (axes4[2], axes4[3])):
        counts = spincorr.sample_pair_counts(qm, pair[0], pair[1], n_mc, rng)
        estimates.append(spincorr.coincidence_expectation(*counts))
    k_mc = abs(estimates[0] + estimates[1] + estimates[2] - estimates[3])
    add("chsh_qm_mc", k_mc, _REGRESS_TWO_SQRT_TWO, 0.02)

    rng = run.stream(1)
    worst = 0.0
    for model in (qm, sc):
        for _ in range(100):
            a = numkit.sample_isotropic_direction(rng)
            b = numkit.sample_isotropic_direction(rng)
            for r_b in (+1, -1):
                worst = max(worst, abs(spincorr.marginal(model, a, b, r_b) - 0.5))
    add("marginal_half", worst, 0.0, 1e-12, "le")

    z = numkit.UnitVector3(0.0, 0.0, 1.0)
    a45 = spincorr.coplanar_axis(math.radians(45.0))
    # quantization axis is z and b = z, so a.n and b.n collapse to a.z and 1
    an, bn = a45.dot(z), 1.0
    trip0 = spincorr.expectation(spincorr.PairModel.triplet(0, z), a45, z)
    add("triplet_m0_expectation", trip0, a45.dot(z) - 2.0 * an * bn, 1e-12)
    trip1 = spincorr.expectation(spincorr.PairModel.triplet(1, z), a45, z)
    add("triplet_m1_expectation", trip1, an * bn, 1e-12)

    rng = run.stream(2)
    a = numkit.sample_isotropic_directions(rng, 50)
    b = numkit.sample_isotropic_directions(rng, 50)
    a2 = numkit.sample_isotropic_directions(rng, 50)
    b2 = numkit.sample_isotropic_directions(rng, 50)
    max_k = 0.0
    for _ in range(50):
        model = spincorr.random_lhv_model(rng, 16)
        max_k = max(max_k, float(np.max(spincorr.lhv_chsh_audit(model, a, b, a2, b2)[0])))
    add("lhv_random_max_K", max_k, 2.0, spincorr.CHSH_BOUND_TOL, "le")

    semi = spincorr.semiclassical_lhv_model()
    add(
        "lhv_semiclassical_canonical_K",
        float(spincorr.lhv_chsh_audit(semi, *axes4)[0]),
        _REGRESS_SC_K,
        1e-9,
    )
    semi_max = float(np.max(spincorr.lhv_chsh_audit(semi, a, b, a2, b2)[0]))
    add("lhv_semiclassical_max_K", semi_max, 4.0 / 3.0, spincorr.CHSH_BOUND_TOL, "le")

    sign_max = 0.0
    for _ in range(20):
        model = spincorr.sign_anticorrelated_model(rng, 64)
        sign_max = max(sign_max, float(np.max(spincorr.lhv_chsh_audit(model, a, b, a2, b2)[0])))
    add("lhv_sign_max_K", sign_max, 2.0, spincorr.CHSH_BOUND_TOL, "le")

    rng = run.stream(3)
    worst = 0.0
    for trial in range(20):
        rows = _randint(rng, 2, 8)
        cols = _randint(rng, 2, 8)
        matrix = (
            _standard_normals(rng, rows * cols)
            + 1j * _standard_normals(rng, rows * cols)
        ).reshape(rows, cols)
        coeffs = spincorr.BipartiteCoefficients.normalized(matrix)
        u = _random_unitary(rng, rows)
        dev = spincorr.no_signaling_audit(
            coeffs, u, _randint(rng, 0, cols - 1), sign=+1 if trial % 2 == 0 else -1
        )[3]
        worst = max(worst, dev)
    add("nosignal_max_deviation", worst, 0.0, 1e-10, "le")

    window_out = configspace.reduce_expansion(
        configspace.ExpansionCoefficients([0.6, 0.8]), window=[1]
    )
    add("reduce_window_mass", window_out.probabilities()[1], 1.0, 1e-12)
    pick_out = configspace.reduce_expansion(
        configspace.ExpansionCoefficients([1.0, 0.0, 0.0]), rng=run.stream(4)
    )
    add("reduce_pick_certain", float(np.argmax(pick_out.probabilities())), 0.0, 0.0)

    spacing = 16.0 / 160
    factors = [
        numkit.sampled_gaussian(-1.0, 0.7, -8.0, spacing, 161).normalized(),
        numkit.sampled_gaussian(1.0, 0.7, -8.0, spacing, 161).normalized(),
    ]
    pair_wf = configspace.symmetrize(
        configspace.ManyBodyWavefunction.from_product(factors), +1
    )
    conditional = configspace.conditional_probability(pair_wf, 1.0)
    add(
        "condspace_conditional_norm",
        float(np.sum(conditional) * spacing),
        1.0,
        1e-9,
    )
    product_wf = configspace.ManyBodyWavefunction.from_product(factors)
    add("condspace_product_residual", configspace.product_form_test(product_wf)[1],
        0.0, 1e-8, "le")

    add(
        "accumulation_time_s",
        wavepacket.accumulation_time(2.18 * E_CHARGE, 3.5e-13, 1e-18),
        _REGRESS_T_ACC,
        1e-12,
        "rel",
    )
    add(
        "accumulation_vs_paper_1e12",
        wavepacket.accumulation_time(2.18 * E_CHARGE, 3.5e-13, 1e-18),
        1.0e12,
        0.05,
        "rel",
    )

    kinetic = 6e6 * E_CHARGE
    mc2 = M_PROTON * C_LIGHT**2
    k0 = math.sqrt(kinetic * (kinetic + 2.0 * mc2)) / (HBAR * C_LIGHT)
    flight = wavepacket.spread_after_flight(
        wavepacket.Dispersion(M_PROTON), k0, 2e-15, 0.05, "longitudinal"
    )
    add("proton_spread_m", flight["final_width"], 0.023, 0.1, "rel")

    min_gauss = numkit.sampled_gaussian(0.0, 1.3, -16.0, 32.0 / 1023, 1024).normalized()
    dx, dk = numkit.fourier_widths(min_gauss)
    add("heisenberg_gaussian_product", dx * dk, 0.5, 0.01, "rel")

    coh_psi = numkit.sampled_gaussian(0.0, 1.0, -8.0, 16.0 / 2047, 2048).normalized()
    length = wavepacket.coherence_profile(coh_psi, [1.0])[1]
    add("coherence_length_gaussian", length, 2.0, 0.01, "rel")

    photon_cavity = quantstat.CavitySpec.photon_gas(1.0, 5800.0)
    peak_bins = quantstat.photon_bins(1.0, 5800.0, 2000, 0.5, 10.0)
    peak_counts = quantstat.spectral_distribution(photon_cavity, peak_bins)
    kt = K_BOLTZMANN * 5800.0
    # mean count times eps/d_eps is the spectral energy density up to
    # constants, so its argmax sits at the Planck peak
    u_density = peak_counts * np.array([b.epsilon / b.d_epsilon for b in peak_bins])
    peak_x = peak_bins[int(np.argmax(u_density))].epsilon / kt
    add("planck_peak_x", peak_x, _REGRESS_PLANCK_PEAK, 0.01)

    add(
        "photon_mode_count",
        quantstat.photon_mode_count(1.0, 5e14, 1e10),
        _REGRESS_MODE_COUNT,
        1e-12,
        "rel",
    )

    lhs, rhs, a_over_b = quantstat.einstein_balance(300.0, 1e13, 1.0, 1e9)
    add("einstein_identity_residual", abs(lhs - rhs) / lhs, 0.0, 1e-10, "le")
    add(
        "einstein_a_over_b_1e15",
        quantstat.einstein_balance(300.0, 1e15, 1.0, 1e9)[2],
        _REGRESS_A_OVER_B,
        1e-12,
        "rel",
    )

    rng = run.stream(5)
    balance_max = 0.0
    for _ in range(200):
        balance_max = max(
            balance_max, quantstat.balance_residual(**_random_balance_args(rng))
        )
    add("balance_max_residual", balance_max, 0.0, 1e-12, "le")
    # one fixed parameter set so the detection of a mismatched constant
    # does not ride on the seed
    fixed = dict(a=1.0, a_prime=1.2, b=0.8, c=0.3, c_prime=-0.2, n=2, n_prime=1,
                 e1i=1.5, e1f=1.1, e2i=1.0, e2f=1.8, s=4.0, r=2.0,
                 s_prime=3.0, r_prime=1.5)
    add("balance_intact_fixed", quantstat.balance_residual(**fixed), 0.0, 1e-12, "le")
    add(
        "balance_broken_fixed",
        quantstat.balance_residual(**fixed, b2=0.88),
        1e-3,
        0.0,
        "ge",
    )

    bose1 = quantstat.count_distribution(quantstat.Statistics.BOSE, 1, 1.0, 1.0)
    geometric = 0.5 ** (np.arange(bose1.w.size) + 1.0)
    add("counts_bose_g1_w", float(np.max(np.abs(bose1.w - geometric))), 0.0, 1e-12, "le")
    add("counts_bose_g1_variance", bose1.variance(), 2.0, 1e-9)
    fermi1 = quantstat.count_distribution(quantstat.Statistics.FERMI, 1, 0.3, 1.0)
    add("counts_fermi_g1_w0", float(fermi1.w[0]), 0.7, 1e-12)
    add(
        "counts_binomial_fold",
        quantstat.binomial_fold_check(5, 7, 0.3),
        0.0,
        1e-12,
        "le",
    )

    bose_big = quantstat.count_distribution(quantstat.Statistics.BOSE, 10000, 2e-4, 1.0)
    poisson = scipy_stats.poisson.pmf(np.arange(bose_big.w.size), 2.0)
    tv = 0.5 * float(np.sum(np.abs(bose_big.w - poisson))) + 0.5 * float(
        1.0 - poisson.sum()
    )
    add("counts_bose_poisson_tv", tv, 0.0, 1e-3, "le")

    dof = quantstat.vonlaue_dof(1e-4, 1.0, 1e9, 1e-8, 1e-3)
    add("vonlaue_ratio_r_2pi", dof[4], 1.0, 1e-10)
    dof_r1 = quantstat.vonlaue_dof(1e-4, 1.0, 1e9, 1e-8, 1e-3, r=1.0)
    add("vonlaue_ratio_r_1", dof_r1[4], 2.0 * math.pi, 1e-10, "rel")

    add("bohr_magneton", wavepacket.BOHR_MAGNETON, _REGRESS_BOHR_MAGNETON, 1e-6, "rel")

    entropy_bins = quantstat.photon_bins(1.0, 1000.0, 200)
    s, ds_de, ds_dn = quantstat.entropy_and_derivatives(
        quantstat.CavitySpec.photon_gas(1.0, 1000.0), entropy_bins
    )
    add("entropy_ds_de_times_t", ds_de * 1000.0, 1.0, 0.01)
    add("entropy_ds_dn_over_k", abs(ds_dn) / K_BOLTZMANN, 0.0, 0.01, "le")

    cold_cavity = quantstat.CavitySpec.photon_gas(1.0, 1000.0)
    sb_bins = quantstat.photon_bins(1.0, 1000.0, 500)
    sb_counts = quantstat.spectral_distribution(cold_cavity, sb_bins)
    sb_energy = float(np.sum(sb_counts * np.array([b.epsilon for b in sb_bins])))
    a_rad = 8.0 * math.pi**5 * K_BOLTZMANN**4 / (15.0 * H_PLANCK**3 * C_LIGHT**3)
    add("stefan_boltzmann_ratio", sb_energy / (a_rad * 1000.0**4), 1.0, 0.005)

    failures = sum(1 for ch in checks if not ch["ok"])
    fields = {
        "checks": checks,
        "total": len(checks),
        "failures": failures,
        "all_ok": failures == 0,
    }
    return fields, None


_HANDLERS = {
    "bell": _cmd_bell,
    "chsh": _cmd_chsh,
    "sample": _cmd_sample,
    "lhv": _cmd_lhv,
    "nosignal": _cmd_nosignal,
    "reduce": _cmd_reduce,
    "condspace": _cmd_condspace,
    "actionprob": _cmd_actionprob,
    "packet spread": _cmd_packet_spread,
    "packet coherence": _cmd_packet_coherence,
    "packet accum": _cmd_packet_accum,
    "packet sterngerlach": _cmd_packet_sterngerlach,
    "cavity": _cmd_cavity,
    "counts": _cmd_counts,
    "balance": _cmd_balance,
    "vonlaue": _cmd_vonlaue,
    "regress": _cmd_regress,
}


# ---------------------------------------------------------------------------
# wiring


def _add_flags(parser: argparse.ArgumentParser, flags):
    for name, conv, _default, help_text in list(flags) + _GLOBAL_FLAGS:
        dest = name.replace("-", "_")
        if conv is _boolean:
            parser.add_argument(
                f"--{name}",
                dest=dest,
                action="store_const",
                const="true",
                default=None,
                help=help_text,
            )
        else:
            parser.add_argument(
                f"--{name}", dest=dest, default=None, metavar="V", help=help_text
            )


def _build_parser() -> _Parser:
    parser = _Parser(prog="packetlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for key, flags in _FLAGS.items():
        if key.startswith("packet "):
            continue
        _add_flags(sub.add_parser(key, help=_HELP[key]), flags)

    packet = sub.add_parser("packet", help="wavepacket kinematics")
    inner = packet.add_subparsers(dest="packet_command", required=True,
                                  metavar="SUBCOMMAND")
    for name in _PACKET_SUBCOMMANDS:
        key = f"packet {name}"
        _add_flags(inner.add_parser(name, help=_HELP[key]), _FLAGS[key])
        # the packet subcommands are also reachable without the prefix
        _add_flags(sub.add_parser(name, help=_HELP[key]), _FLAGS[key])
    return parser


def _command_key(ns: argparse.Namespace) -> str:
    if ns.command == "packet":
        return f"packet {ns.packet_command}"
    if ns.command in _PACKET_SUBCOMMANDS:
        return f"packet {ns.command}"
    return ns.command


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config must be a JSON object")
    return data


def _resolve(flags, ns: argparse.Namespace, config: dict) -> dict:
    spec = list(flags) + _GLOBAL_FLAGS
    allowed = {name for name, *_ in spec if name != "config"}
    unknown = sorted(key for key in config if key not in allowed)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    params = {}
    for name, conv, default, _help in spec:
        raw = getattr(ns, name.replace("-", "_"), None)
        if raw is None and name != "config":
            raw = config.get(name)
        params[name] = default if raw is None else conv(raw, name)
    return params


def run(argv, stdout=None, stderr=None) -> int:
    """Parse argv, execute, write one record. Returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        try:
            ns = _build_parser().parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        key = _command_key(ns)
        params = _resolve(_FLAGS[key], ns, _load_config(getattr(ns, "config", None)))
        if params["format"] == "csv" and key not in _CSV_COMMANDS:
            raise CliError(
                "csv output is only available for "
                + ", ".join(sorted(_CSV_COMMANDS))
            )
        fields, csv_payload = _HANDLERS[key](_Run(key, params, stderr))

        if params["format"] == "csv":
            text = _render_csv(*csv_payload)
        else:
            record = {"command": key, "seed": params["seed"], "params": params}
            record.update(fields)
            text = _render_json(record) + "\n"
        if params["out"] is not None:
            try:
                with open(params["out"], "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            except OSError as exc:
                raise CliError(f"cannot write output: {exc}") from None
        else:
            stdout.write(text)
        if key == "regress" and not fields["all_ok"]:
            return 2
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    except PacketLabError as exc:
        print(f"error: {exc}", file=stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
