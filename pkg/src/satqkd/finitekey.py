"""Decoy-state BB84 finite-key secure-key-length computation.

Key length over one accumulation block:

    l = s_Z0 + s_Z1 (1 - h(phi)) - lambda_EC - 6 log2(b / eps_sec)
        - log2(2 / eps_corr)

with b = 19 for the one-decoy and b = 21 for the two-decoy protocol.
s_Z0 / s_Z1 are lower bounds on the vacuum and single-photon detections,
phi upper-bounds the single-photon phase error rate, and lambda_EC =
f_ec * n_Z * h(Q_Z) models error-correction leakage.

The yield and error estimators follow the standard one- and two-decoy
finite-key analyses: observed counts are rescaled by e^k / p_k, padded by
Hoeffding deviations delta(n, eps) = sqrt(n/2 ln(1/eps)) with eps_sec
split uniformly over the invocations, and combined into linear-program
style closed forms. The X-to-Z statistical transfer uses the correction
gamma(a, b, c, d) with the protocol's epsilon budget. A Monte Carlo
oracle with true photon-number tags gates these bounds in the test suite.

All estimator arithmetic is written against numpy so the whole-pass
optimizer can evaluate many candidate blocks in one call; the public
functions accept plain scalars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import DetectorSpec, SourceSpec, TallySet, background_yield, dead_time_factor

EPSILON_BUDGET = {1: 19, 2: 21}


class FiniteKeyError(ValueError):
    """Raised for invalid security parameters or tally configurations."""


@dataclass(frozen=True)
class SecurityParams:
    """Secrecy/correctness failure probabilities and EC inefficiency."""

    eps_sec: float = 1e-9
    eps_corr: float = 1e-15
    f_ec: float = 1.16

    def __post_init__(self) -> None:
        for name in ("eps_sec", "eps_corr"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise FiniteKeyError(f"security.{name} must be in (0, 1), got {value}")
        if self.f_ec < 1.0:
            raise FiniteKeyError(f"security.f_ec must be >= 1, got {self.f_ec}")


@dataclass(frozen=True)
class DecoyBounds:
    """Estimator outputs feeding the key-length formula.

    s_z0_up is the error-based vacuum upper bound used inside the
    single-photon estimate (one-decoy protocol only).
    """

    s_z0_low: float
    s_z1_low: float
    phi_z_up: float
    tau0: float
    tau1: float
    s_x1_low: float
    v_x1_up: float
    aborted: bool
    s_z0_up: float | None = None
    note: str = ""


@dataclass(frozen=True)
class SklResult:
    """Secure key length with per-term diagnostics."""

    skl_bits: int
    lambda_ec_bits: float
    aborted: bool
    diagnostics: dict[str, float] = field(default_factory=dict)


def binary_entropy(x):
    """Binary entropy -x log2 x - (1-x) log2(1-x), with h(0) = h(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise FiniteKeyError(f"binary_entropy argument must be in [0, 1], got {x}")
    safe = np.clip(arr, 1e-300, 1.0 - 1e-16)
    out = np.where(
        (arr <= 0.0) | (arr >= 1.0),
        0.0,
        -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe),
    )
    return float(out) if out.ndim == 0 else out


def hoeffding_delta(n, eps: float):
    """Finite-sample deviation sqrt((n/2) ln(1/eps))."""
    if not 0.0 < eps < 1.0:
        raise FiniteKeyError(f"eps must be in (0, 1), got {eps}")
    out = np.sqrt(np.asarray(n, dtype=float) / 2.0 * np.log(1.0 / eps))
    return float(out) if out.ndim == 0 else out


def emission_tau(intensities, probabilities, n: int) -> float:
    """Probability tau_n that an emitted pulse carries exactly n photons.

    tau_n = sum_k p_k e^(-k) k^n / n! over the intensity mixture.
    """
    if n < 0:
        raise FiniteKeyError(f"photon number must be >= 0, got {n}")
    probs = list(probabilities)
    if abs(sum(probs) - 1.0) > 1e-9:
        raise FiniteKeyError(f"intensity probabilities must sum to 1, got {sum(probs)}")
    fact = float(math.factorial(n))
    total = 0.0
    for k, p in zip(intensities, probs):
        total += p * math.exp(-k) * k**n / fact
    return float(total)


def _gamma_transfer(a: float, b, c, d, budget: int):
    """Statistical correction when transferring the X-basis error rate to
    the Z-basis phase error rate."""
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    ok = (b > 0.0) & (b < 1.0) & (c > 0.0) & (d > 0.0)
    b_s = np.where(ok, b, 0.25)
    c_s = np.where(ok, c, 1.0)
    d_s = np.where(ok, d, 1.0)
    inner = (c_s + d_s) / (c_s * d_s * (1.0 - b_s) * b_s) * (budget / a) ** 2
    inner = np.maximum(inner, 1.0)
    gamma = np.sqrt(
        (c_s + d_s) * (1.0 - b_s) * b_s / (c_s * d_s * np.log(2.0)) * np.log2(inner)
    )
    return np.where(ok, gamma, 0.0)


def _entropy_unchecked(x):
    safe = np.clip(np.asarray(x, dtype=float), 1e-300, 1.0 - 1e-16)
    return np.where(
        (np.asarray(x) <= 0.0), 0.0, -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe)
    )


def _rescale_plus(count, p_k: float, k: float, delta):
    return np.exp(k) / p_k * (count + delta)

def _rescale_minus(count, p_k: float, k: float, delta):
    return np.maximum(np.exp(k) / p_k * (count - delta), 0.0)


def _estimate_arrays(
    t: dict[str, np.ndarray],
    mu: float,
    nu: float,
    p_mu: float,
    p_nu: float,
    p_vac: float,
    security: SecurityParams,
    n_decoys: int,
) -> dict[str, np.ndarray]:
    """Decoy bounds over arrays of tally blocks (shared protocol params).

    `t` maps tally field names (n_z_mu, ..., m_x_vac) to equal-shape arrays.
    Returns s_z0_low, s_z1_low, s_x1_low, v_x1_up, phi_up, tau0, tau1 and an
    `aborted` mask.
    """
    budget = EPSILON_BUDGET[n_decoys]
    eps1 = security.eps_sec / budget
    if n_decoys == 2:
        intensities = [mu, nu, 0.0]
        probs = [p_mu, p_nu, p_vac]
    else:
        intensities = [mu, nu]
        probs = [p_mu, p_nu]
    tau0 = emission_tau(intensities, probs, 0)
    tau1 = emission_tau(intensities, probs, 1)

    n_z_tot = t["n_z_mu"] + t["n_z_nu"] + t["n_z_vac"]
    n_x_tot = t["n_x_mu"] + t["n_x_nu"] + t["n_x_vac"]
    m_z_tot = t["m_z_mu"] + t["m_z_nu"] + t["m_z_vac"]
    m_x_tot = t["m_x_mu"] + t["m_x_nu"] + t["m_x_vac"]
    d_nz = hoeffding_delta(n_z_tot, eps1)
    d_nx = hoeffding_delta(n_x_tot, eps1)
    d_mz = hoeffding_delta(m_z_tot, eps1)
    d_mx = hoeffding_delta(m_x_tot, eps1)

    denom = nu * (mu - nu)

    def _pair_bounds(n_mu, n_nu, m_mu, m_nu, d_n, d_m):
        """Estimators built from the (mu, nu) pair alone, avoiding the noisy
        low-probability vacuum-intensity counts: an error-based zero-photon
        upper bound, the derived one-photon lower bound, and the
        error-difference one-photon error upper bound."""
        s0_up = 2.0 * (
            tau0
            * np.minimum(
                _rescale_plus(m_mu, p_mu, mu, d_m), _rescale_plus(m_nu, p_nu, nu, d_m)
            )
            + d_n
        )
        s0_low = np.maximum(
            tau0
            * (mu * _rescale_minus(n_nu, p_nu, nu, d_n) - nu * _rescale_plus(n_mu, p_mu, mu, d_n))
            / (mu - nu),
            0.0,
        )
        s1_low = tau1 * mu * (
            _rescale_minus(n_nu, p_nu, nu, d_n)
            - (nu**2 / mu**2) * _rescale_plus(n_mu, p_mu, mu, d_n)
            - ((mu**2 - nu**2) / mu**2) * (s0_up / tau0)
        ) / denom
        v1_up = tau1 * (
            _rescale_plus(m_mu, p_mu, mu, d_m) - _rescale_minus(m_nu, p_nu, nu, d_m)
        ) / (mu - nu)
        return s0_up, s0_low, s1_low, v1_up

    if n_decoys == 2:
        # Vacuum-intensity data bounds the zero-photon detections directly;
        # the pair-only estimators stay valid here too and often win when
        # the vacuum counts are fluctuation dominated, so the sharper of
        # each pair of valid bounds is used.
        _, s_z0_pair, s_z1_pair, _ = _pair_bounds(
            t["n_z_mu"], t["n_z_nu"], t["m_z_mu"], t["m_z_nu"], d_nz, d_mz
        )
        _, s_x0_pair, s_x1_pair, v_x1_pair = _pair_bounds(
            t["n_x_mu"], t["n_x_nu"], t["m_x_mu"], t["m_x_nu"], d_nx, d_mx
        )
        s_z0 = np.maximum(tau0 * _rescale_minus(t["n_z_vac"], p_vac, 0.0, d_nz), s_z0_pair)
        s_x0 = np.maximum(tau0 * _rescale_minus(t["n_x_vac"], p_vac, 0.0, d_nx), s_x0_pair)
        s_z1 = tau1 * mu * (
            _rescale_minus(t["n_z_nu"], p_nu, nu, d_nz)
            - _rescale_plus(t["n_z_vac"], p_vac, 0.0, d_nz)
            - (nu**2 / mu**2) * (_rescale_plus(t["n_z_mu"], p_mu, mu, d_nz) - s_z0 / tau0)
        ) / denom
        s_x1 = tau1 * mu * (
            _rescale_minus(t["n_x_nu"], p_nu, nu, d_nx)
            - _rescale_plus(t["n_x_vac"], p_vac, 0.0, d_nx)
            - (nu**2 / mu**2) * (_rescale_plus(t["n_x_mu"], p_mu, mu, d_nx) - s_x0 / tau0)
        ) / denom
        s_z1 = np.maximum(s_z1, s_z1_pair)
        s_x1 = np.maximum(s_x1, s_x1_pair)
        v_x1 = np.minimum(
            tau1 * (
                _rescale_plus(t["m_x_nu"], p_nu, nu, d_mx)
                - _rescale_minus(t["m_x_vac"], p_vac, 0.0, d_mx)
            ) / nu,
            v_x1_pair,
        )
    else:
        # One decoy: no vacuum intensity, so only the pair estimators exist.
        # Worst case, every observed error came from a vacuum event (QBER
        # 1/2), which upper-bounds the zero-photon detections feeding the
        # single-photon bound; differencing the two intensities' error
        # counts bounds the single-photon errors without vacuum data.
        s_z0_up, s_z0, s_z1, _ = _pair_bounds(
            t["n_z_mu"], t["n_z_nu"], t["m_z_mu"], t["m_z_nu"], d_nz, d_mz
        )
        _, s_x0, s_x1, v_x1 = _pair_bounds(
            t["n_x_mu"], t["n_x_nu"], t["m_x_mu"], t["m_x_nu"], d_nx, d_mx
        )

    s_z0 = np.clip(s_z0, 0.0, n_z_tot)
    s_z1_raw = s_z1
    s_x1_raw = s_x1
    s_z1 = np.clip(s_z1, 0.0, n_z_tot - s_z0)
    s_x1 = np.clip(s_x1, 0.0, n_x_tot)
    v_x1 = np.maximum(v_x1, 0.0)

    usable = (s_z1_raw > 0.0) & (s_x1_raw > 0.0) & (n_z_tot > 0.0)
    ratio = np.where(usable, v_x1 / np.where(s_x1 > 0.0, s_x1, 1.0), 1.0)
    phi = ratio + _gamma_transfer(security.eps_sec, ratio, s_z1, s_x1, budget)
    aborted = ~usable | (phi > 0.5) | ~np.isfinite(phi)
    phi = np.clip(np.where(np.isfinite(phi), phi, 1.0), 0.0, 0.5)
    return {
        "s_z0_low": s_z0,
        "s_z1_low": s_z1,
        "s_x1_low": s_x1,
        "v_x1_up": v_x1,
        "phi_up": phi,
        "tau0": tau0,
        "tau1": tau1,
        "aborted": aborted,
        "s_z0_up": s_z0_up if n_decoys == 1 else None,
    }


def skl_real_arrays(
    t: dict[str, np.ndarray],
    mu: float,
    nu: float,
    p_mu: float,
    p_nu: float,
    p_vac: float,
    security: SecurityParams,
    n_decoys: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Unfloored key length and abort mask for arrays of tally blocks."""
    est = _estimate_arrays(t, mu, nu, p_mu, p_nu, p_vac, security, n_decoys)
    budget = EPSILON_BUDGET[n_decoys]
    n_z_tot = t["n_z_mu"] + t["n_z_nu"] + t["n_z_vac"]
    m_z_tot = t["m_z_mu"] + t["m_z_nu"] + t["m_z_vac"]
    q_z = np.where(n_z_tot > 0, m_z_tot / np.maximum(n_z_tot, 1e-300), 0.0)
    lam_ec = security.f_ec * n_z_tot * _entropy_unchecked(q_z)
    penalty = 6.0 * np.log2(budget / security.eps_sec) + np.log2(2.0 / security.eps_corr)
    l_real = (
        est["s_z0_low"]
        + est["s_z1_low"] * (1.0 - _entropy_unchecked(est["phi_up"]))
        - lam_ec
        - penalty
    )
    aborted = est["aborted"] | (l_real <= 0.0)
    return np.where(aborted, 0.0, l_real), aborted


def _tally_dict(tallies: TallySet) -> dict[str, np.ndarray]:
    names = (
        "n_z_mu", "n_z_nu", "n_z_vac", "n_x_mu", "n_x_nu", "n_x_vac",
        "m_z_mu", "m_z_nu", "m_z_vac", "m_x_mu", "m_x_nu", "m_x_vac",
    )
    return {name: np.asarray(getattr(tallies, name), dtype=float) for name in names}


def _bounds_from_estimates(est: dict[str, np.ndarray], note: str) -> DecoyBounds:
    return DecoyBounds(
        s_z0_low=float(est["s_z0_low"]),
        s_z1_low=float(est["s_z1_low"]),
        phi_z_up=float(est["phi_up"]),
        tau0=float(est["tau0"]),
        tau1=float(est["tau1"]),
        s_x1_low=float(est["s_x1_low"]),
        v_x1_up=float(est["v_x1_up"]),
        aborted=bool(est["aborted"]),
        s_z0_up=None if est["s_z0_up"] is None else float(est["s_z0_up"]),
        note=note,
    )


def two_decoy_bounds(tallies: TallySet, source: SourceSpec, security: SecurityParams) -> DecoyBounds:
    """Vacuum/single-photon bounds for the two-decoy protocol (mu, nu, vacuum)."""
    if not source.vacuum_included:
        raise FiniteKeyError("two_decoy_bounds requires a source with the vacuum intensity")
    est = _estimate_arrays(
        _tally_dict(tallies),
        source.signal_intensity,
        source.decoy_intensity,
        source.p_mu,
        source.p_nu,
        source.p_vac,
        security,
        n_decoys=2,
    )
    return _bounds_from_estimates(est, note="two-decoy")


def one_decoy_bounds(tallies: TallySet, source: SourceSpec, security: SecurityParams) -> DecoyBounds:
    """Vacuum/single-photon bounds for the one-decoy protocol (mu, nu only)."""
    if source.vacuum_included:
        raise FiniteKeyError("one_decoy_bounds requires a source without the vacuum intensity")
    est = _estimate_arrays(
        _tally_dict(tallies),
        source.signal_intensity,
        source.decoy_intensity,
        source.p_mu,
        source.p_nu,
        0.0,
        security,
        n_decoys=1,
    )
    return _bounds_from_estimates(est, note="one-decoy")


def estimate_bounds(tallies: TallySet, source: SourceSpec, security: SecurityParams) -> DecoyBounds:
    """Dispatch on the source's decoy structure."""
    if source.vacuum_included:
        return two_decoy_bounds(tallies, source, security)
    return one_decoy_bounds(tallies, source, security)


def secure_key_length(
    bounds: DecoyBounds,
    tallies: TallySet,
    security: SecurityParams,
    n_decoys: int,
) -> SklResult:
    """Evaluate the key-length formula for one accumulation block.

    Counts are kept real throughout; flooring happens only on the final
    length. A negative length aborts with zero bits.
    """
    if n_decoys not in EPSILON_BUDGET:
        raise FiniteKeyError(f"n_decoys must be 1 or 2, got {n_decoys}")
    budget = EPSILON_BUDGET[n_decoys]
    n_z = tallies.n_z_total
    m_z = tallies.m_z_total
    q_z = m_z / n_z if n_z > 0 else 0.0
    lam_ec = security.f_ec * n_z * binary_entropy(min(q_z, 1.0))
    penalty_sec = 6.0 * np.log2(budget / security.eps_sec)
    penalty_corr = np.log2(2.0 / security.eps_corr)
    key_term = bounds.s_z0_low + bounds.s_z1_low * (1.0 - binary_entropy(bounds.phi_z_up))
    l_real = float(key_term - lam_ec - penalty_sec - penalty_corr)
    aborted = bool(bounds.aborted or l_real <= 0.0)
    diagnostics = {
        "s_z0_low": bounds.s_z0_low,
        "s_z1_low": bounds.s_z1_low,
        "phi_z_up": bounds.phi_z_up,
        "one_minus_h_phi": 1.0 - binary_entropy(bounds.phi_z_up),
        "lambda_ec_bits": float(lam_ec),
        "penalty_sec_bits": float(penalty_sec),
        "penalty_corr_bits": float(penalty_corr),
        "q_z_observed": float(q_z),
        "l_real": float(l_real),
    }
    return SklResult(
        skl_bits=0 if aborted else int(np.floor(l_real)),
        lambda_ec_bits=float(lam_ec),
        aborted=aborted,
        diagnostics=diagnostics,
    )


def skl_from_tallies(
    tallies: TallySet,
    source: SourceSpec,
    security: SecurityParams,
    n_decoys: int,
) -> SklResult:
    """Bounds plus key length in one step."""
    bounds = estimate_bounds(tallies, source, security)
    return secure_key_length(bounds, tallies, security, n_decoys)


def asymptotic_skr(
    eta: float,
    source: SourceSpec,
    det: DetectorSpec,
    security: SecurityParams,
) -> float:
    """Asymptotic secure-key rate per emitted pulse at channel transmission eta.

    Infinite-data limit: exact Poisson yields replace the decoy bounds, the
    fluctuation and transfer terms vanish and the log penalties drop out;
    lambda_EC keeps the f_ec inefficiency. eta excludes the detector
    efficiency, which is applied here.
    """
    if eta < 0:
        raise FiniteKeyError(f"eta must be >= 0, got {eta}")
    if eta == 0:
        return 0.0
    eta_t = eta * det.efficiency
    y0 = background_yield(det, source.pulse_rate_hz)
    intensities = source.intensities()
    probabilities = source.probabilities()
    gains = {key: 1.0 - (1.0 - y0) * np.exp(-k * eta_t) for key, k in intensities.items()}
    q_click = sum(probabilities[key] * gains[key] for key in gains)
    if q_click <= 0:
        return 0.0
    err_z = sum(
        probabilities[key]
        * (0.5 * y0 + source.misalignment_z * (1.0 - np.exp(-k * eta_t)))
        for key, k in intensities.items()
    )
    e_z = err_z / q_click
    f_dead = dead_time_factor(source.pulse_rate_hz * q_click, det.dead_time_ns)
    tau0 = emission_tau(list(intensities.values()), list(probabilities.values()), 0)
    tau1 = emission_tau(list(intensities.values()), list(probabilities.values()), 1)
    y1 = 1.0 - (1.0 - y0) * (1.0 - eta_t)
    e1_x = (0.5 * y0 + source.misalignment_x * (1.0 - y0) * eta_t) / y1
    p_sift_z = source.p_z_alice * source.p_z_bob
    rate = p_sift_z * f_dead * (
        tau0 * y0
        + tau1 * y1 * (1.0 - binary_entropy(min(e1_x, 0.5)))
        - security.f_ec * q_click * binary_entropy(min(e_z, 1.0))
    )
    return max(0.0, float(rate))
