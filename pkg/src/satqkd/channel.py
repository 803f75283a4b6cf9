"""Detection and error statistics of a decoy-state downlink over a pass.

Expected-value tallies use the standard weak-coherent-pulse channel model:
a pulse of intensity k clicks with probability D_k = 1 - (1 - Y0) e^(-k eta)
and errs with probability e_k = (Y0/2 + e_mis (1 - e^(-k eta))) / D_k,
where eta includes the detector efficiency and Y0 collects dark and
background counts. A seeded per-pulse Monte Carlo sampler with true
photon-number bookkeeping serves as the validation oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linkbudget import LinkBudgetBreakdown
from .orbit import PassGeometry

INTENSITY_KEYS = ("mu", "nu", "vac")


class ChannelError(ValueError):
    """Raised for invalid detector or source configurations."""


@dataclass(frozen=True)
class DetectorSpec:
    """Receiver detection system; rates are per detector.

    background_rate_hz holds the measured (or assumed) sky-background click
    rate of the deployed system, not the radiometric estimate from
    linkbudget.background_click_rate.
    """

    efficiency: float
    dark_count_rate_hz: float
    dead_time_ns: float
    timing_jitter_ps: float
    background_rate_hz: float
    n_detectors: int = 1
    gate_width_ns: float | None = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.efficiency <= 1.0:
            raise ChannelError(f"detector.efficiency must be in (0, 1], got {self.efficiency}")
        for name in ("dark_count_rate_hz", "dead_time_ns", "timing_jitter_ps", "background_rate_hz"):
            if getattr(self, name) < 0:
                raise ChannelError(f"detector.{name} must be >= 0, got {getattr(self, name)}")
        if self.n_detectors < 1:
            raise ChannelError(f"detector.n_detectors must be >= 1, got {self.n_detectors}")
        if self.gate_width_ns is not None and self.gate_width_ns <= 0:
            raise ChannelError(f"detector.gate_width_ns must be > 0, got {self.gate_width_ns}")


@dataclass(frozen=True)
class SourceSpec:
    """Transmitter protocol parameters of the decoy-state source."""

    pulse_rate_hz: float
    signal_intensity: float
    decoy_intensity: float
    p_mu: float
    p_nu: float
    p_z_alice: float
    p_z_bob: float
    vacuum_included: bool = True
    misalignment_z: float = 0.01
    misalignment_x: float = 0.01

    def __post_init__(self) -> None:
        if self.pulse_rate_hz <= 0:
            raise ChannelError(f"source.pulse_rate_hz must be > 0, got {self.pulse_rate_hz}")
        if not 0.0 < self.decoy_intensity < self.signal_intensity:
            raise ChannelError(
                "source intensities must satisfy 0 < decoy_intensity < signal_intensity, got "
                f"(mu={self.signal_intensity}, nu={self.decoy_intensity})"
            )
        for name in ("p_mu", "p_nu", "p_z_alice", "p_z_bob"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ChannelError(f"source.{name} must be in (0, 1), got {value}")
        total = self.p_mu + self.p_nu
        if self.vacuum_included:
            if total >= 1.0:
                raise ChannelError(
                    f"source.p_mu + source.p_nu must be < 1 with a vacuum intensity, got {total}"
                )
        elif abs(total - 1.0) > 1e-9:
            raise ChannelError(
                f"source.p_mu + source.p_nu must equal 1 without a vacuum intensity, got {total}"
            )
        for name in ("misalignment_z", "misalignment_x"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise ChannelError(f"source.{name} must be in [0, 0.5), got {value}")

    @property
    def p_vac(self) -> float:
        return 1.0 - self.p_mu - self.p_nu if self.vacuum_included else 0.0

    def intensities(self) -> dict[str, float]:
        out = {"mu": self.signal_intensity, "nu": self.decoy_intensity}
        if self.vacuum_included:
            out["vac"] = 0.0
        return out

    def probabilities(self) -> dict[str, float]:
        out = {"mu": self.p_mu, "nu": self.p_nu}
        if self.vacuum_included:
            out["vac"] = self.p_vac
        return out


@dataclass(frozen=True)
class TruePhotonCounts:
    """Ground truth from the Monte Carlo sampler: detections and errors
    tagged with the photon number actually carried by the emitting pulse."""

    s_z0: int = 0
    s_z1: int = 0
    s_x0: int = 0
    s_x1: int = 0
    m_z0: int = 0
    m_z1: int = 0
    m_x0: int = 0
    m_x1: int = 0


@dataclass(frozen=True)
class TallySet:
    """Detected (n) and erroneous (m) counts per intensity and basis.

    Expected-value mode stores reals; Monte Carlo mode stores integers and
    attaches the photon-number ground truth.
    """

    n_z_mu: float = 0.0
    n_z_nu: float = 0.0
    n_z_vac: float = 0.0
    n_x_mu: float = 0.0
    n_x_nu: float = 0.0
    n_x_vac: float = 0.0
    m_z_mu: float = 0.0
    m_z_nu: float = 0.0
    m_z_vac: float = 0.0
    m_x_mu: float = 0.0
    m_x_nu: float = 0.0
    m_x_vac: float = 0.0
    n_sent: float = 0.0
    truth: TruePhotonCounts | None = None

    def n_z(self, key: str) -> float:
        return getattr(self, f"n_z_{key}")

    def n_x(self, key: str) -> float:
        return getattr(self, f"n_x_{key}")

    def m_z(self, key: str) -> float:
        return getattr(self, f"m_z_{key}")

    def m_x(self, key: str) -> float:
        return getattr(self, f"m_x_{key}")

    @property
    def n_z_total(self) -> float:
        return self.n_z_mu + self.n_z_nu + self.n_z_vac

    @property
    def n_x_total(self) -> float:
        return self.n_x_mu + self.n_x_nu + self.n_x_vac

    @property
    def m_z_total(self) -> float:
        return self.m_z_mu + self.m_z_nu + self.m_z_vac

    @property
    def m_x_total(self) -> float:
        return self.m_x_mu + self.m_x_nu + self.m_x_vac

    def scaled(self, factor: float) -> "TallySet":
        """All counts multiplied by factor (truth dropped)."""
        values = {
            name: getattr(self, name) * factor
            for name in (
                "n_z_mu", "n_z_nu", "n_z_vac", "n_x_mu", "n_x_nu", "n_x_vac",
                "m_z_mu", "m_z_nu", "m_z_vac", "m_x_mu", "m_x_nu", "m_x_vac",
                "n_sent",
            )
        }
        return TallySet(**values)


def background_yield(det: DetectorSpec, pulse_rate_hz: float) -> float:
    """Noise click probability per gated pulse.

    Y0 = n_detectors * (dark_rate + background_rate) * gate_width, clamped
    to [0, 1]. When no gate width is configured the reciprocal pulse rate
    acts as the gate.
    """
    if det.gate_width_ns is not None:
        gate_s = det.gate_width_ns * 1e-9
    else:
        if pulse_rate_hz <= 0:
            raise ChannelError(f"pulse_rate_hz must be > 0, got {pulse_rate_hz}")
        gate_s = 1.0 / pulse_rate_hz
    y0 = det.n_detectors * (det.dark_count_rate_hz + det.background_rate_hz) * gate_s
    return min(1.0, y0)


def pulse_gain(k: float, eta_total: float, y0: float):
    """Click probability of an intensity-k pulse: 1 - (1 - Y0) e^(-k eta)."""
    return 1.0 - (1.0 - y0) * np.exp(-k * eta_total)


def pulse_qber(k: float, eta_total: float, y0: float, e_mis: float):
    """Error fraction of intensity-k clicks.

    e_k = (Y0/2 + e_mis (1 - e^(-k eta))) / D_k. Undefined for D_k = 0.
    """
    d_k = pulse_gain(k, eta_total, y0)
    if np.any(np.asarray(d_k) <= 0.0):
        raise ChannelError("pulse_qber undefined: pulse gain is zero")
    return (0.5 * y0 + e_mis * (1.0 - np.exp(-k * eta_total))) / d_k


def dead_time_factor(click_rate_hz, dead_time_ns: float):
    """Throughput reduction 1 / (1 + R tau) from detector dead time."""
    return 1.0 / (1.0 + click_rate_hz * dead_time_ns * 1e-9)


def _eta_per_sample(breakdowns: list[LinkBudgetBreakdown], det: DetectorSpec) -> np.ndarray:
    return np.array([b.eta for b in breakdowns]) * det.efficiency


def expected_tallies(
    pass_geometry: PassGeometry,
    breakdowns: list[LinkBudgetBreakdown],
    source: SourceSpec,
    det: DetectorSpec,
    min_elevation_deg: float,
) -> TallySet:
    """Expected counts accumulated over all samples above the elevation cut.

    Per sample, per intensity k and basis b:
        n_b_k += rate * dt * p_k * p_sift(b) * D_k * f_dead
        m_b_k += e_k(b) * (that contribution)
    with f_dead = 1 / (1 + R_click * tau_dead) evaluated from the total
    (pre-sifting) click rate of the sample.
    """
    if len(breakdowns) != len(pass_geometry.samples):
        raise ChannelError(
            f"need one breakdown per pass sample, got {len(breakdowns)} for "
            f"{len(pass_geometry.samples)} samples"
        )
    elevations = np.array(pass_geometry.elevations_deg())
    keep = elevations >= min_elevation_deg
    if not keep.any():
        return TallySet()
    eta = _eta_per_sample(breakdowns, det)[keep]
    y0 = background_yield(det, source.pulse_rate_hz)
    pulses = source.pulse_rate_hz * pass_geometry.sample_dt_s
    p_sift_z = source.p_z_alice * source.p_z_bob
    p_sift_x = (1.0 - source.p_z_alice) * (1.0 - source.p_z_bob)

    intensities = source.intensities()
    probabilities = source.probabilities()
    gains = {key: pulse_gain(k, eta, y0) for key, k in intensities.items()}
    mean_gain = sum(probabilities[key] * gains[key] for key in gains)
    f_dead = dead_time_factor(source.pulse_rate_hz * mean_gain, det.dead_time_ns)

    values: dict[str, float] = {}
    for key, k in intensities.items():
        base = pulses * probabilities[key] * gains[key] * f_dead
        e_z = pulse_qber(k, eta, y0, source.misalignment_z)
        e_x = pulse_qber(k, eta, y0, source.misalignment_x)
        values[f"n_z_{key}"] = float(np.sum(base * p_sift_z))
        values[f"n_x_{key}"] = float(np.sum(base * p_sift_x))
        values[f"m_z_{key}"] = float(np.sum(base * p_sift_z * e_z))
        values[f"m_x_{key}"] = float(np.sum(base * p_sift_x * e_x))
    values["n_sent"] = float(pulses * np.count_nonzero(keep))
    return TallySet(**values)


def expected_tallies_fixed_eta(
    eta_channel: float,
    n_pulses: float,
    source: SourceSpec,
    det: DetectorSpec,
) -> TallySet:
    """Expected counts for a static channel block of n_pulses at fixed eta."""
    eta = eta_channel * det.efficiency
    y0 = background_yield(det, source.pulse_rate_hz)
    p_sift_z = source.p_z_alice * source.p_z_bob
    p_sift_x = (1.0 - source.p_z_alice) * (1.0 - source.p_z_bob)
    intensities = source.intensities()
    probabilities = source.probabilities()
    gains = {key: float(pulse_gain(k, eta, y0)) for key, k in intensities.items()}
    mean_gain = sum(probabilities[key] * gains[key] for key in gains)
    f_dead = dead_time_factor(source.pulse_rate_hz * mean_gain, det.dead_time_ns)

    values: dict[str, float] = {"n_sent": float(n_pulses)}
    for key, k in intensities.items():
        base = n_pulses * probabilities[key] * gains[key] * f_dead
        e_z = float(pulse_qber(k, eta, y0, source.misalignment_z))
        e_x = float(pulse_qber(k, eta, y0, source.misalignment_x))
        values[f"n_z_{key}"] = base * p_sift_z
        values[f"n_x_{key}"] = base * p_sift_x
        values[f"m_z_{key}"] = base * p_sift_z * e_z
        values[f"m_x_{key}"] = base * p_sift_x * e_x
    return TallySet(**values)


def monte_carlo_tallies(
    seed: int,
    pass_geometry: PassGeometry,
    breakdowns: list[LinkBudgetBreakdown],
    source: SourceSpec,
    det: DetectorSpec,
    min_elevation_deg: float,
    thinning: float = 1.0,
) -> TallySet:
    """Per-pulse sampling oracle for expected_tallies.

    Simulates round(rate * dt / thinning) pulses per kept sample: intensity,
    bases, emitted photon number (Poisson), background and signal clicks,
    dead-time survival, and bit errors are all drawn per pulse group. Clicks
    are tagged with the pulse's true photon number, reported in truth.

    With thinning t, expectations match expected_tallies computed for a
    source whose pulse rate is divided by t.
    """
    if thinning < 1.0:
        raise ChannelError(f"thinning must be >= 1, got {thinning}")
    if len(breakdowns) != len(pass_geometry.samples):
        raise ChannelError(
            f"need one breakdown per pass sample, got {len(breakdowns)} for "
            f"{len(pass_geometry.samples)} samples"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    y0 = background_yield(det, source.pulse_rate_hz)
    pulses_per_sample = int(round(source.pulse_rate_hz * pass_geometry.sample_dt_s / thinning))
    p_sift_z = source.p_z_alice * source.p_z_bob
    p_sift_x = (1.0 - source.p_z_alice) * (1.0 - source.p_z_bob)
    p_other = 1.0 - p_sift_z - p_sift_x

    intensities = source.intensities()
    probabilities = source.probabilities()
    keys = list(intensities)
    # Basis-sifting categories per intensity: (Z+Z, X+X, mismatch).
    category_p = []
    for key in keys:
        category_p.extend(
            [probabilities[key] * p_sift_z, probabilities[key] * p_sift_x, probabilities[key] * p_other]
        )
    category_p = np.array(category_p)

    counts = {name: 0 for name in (
        "n_z_mu", "n_z_nu", "n_z_vac", "n_x_mu", "n_x_nu", "n_x_vac",
        "m_z_mu", "m_z_nu", "m_z_vac", "m_x_mu", "m_x_nu", "m_x_vac",
    )}
    truth = {name: 0 for name in (
        "s_z0", "s_z1", "s_x0", "s_x1", "m_z0", "m_z1", "m_x0", "m_x1",
    )}
    n_sent = 0

    eta_all = _eta_per_sample(breakdowns, det)
    for sample, eta in zip(pass_geometry.samples, eta_all):
        if sample.elevation_deg < min_elevation_deg:
            continue
        n_sent += pulses_per_sample
        mean_gain = sum(
            probabilities[key] * float(pulse_gain(k, eta, y0)) for key, k in intensities.items()
        )
        f_dead = dead_time_factor(source.pulse_rate_hz * mean_gain, det.dead_time_ns)
        split = rng.multinomial(pulses_per_sample, category_p)
        for i, key in enumerate(keys):
            k = intensities[key]
            for basis, group in (("z", split[3 * i]), ("x", split[3 * i + 1])):
                if group == 0:
                    continue
                e_mis = source.misalignment_z if basis == "z" else source.misalignment_x
                photon_counts = np.bincount(rng.poisson(k, group)) if k > 0 else np.array([group])
                for n_photons, c_n in enumerate(photon_counts):
                    if c_n == 0:
                        continue
                    n_bg = rng.binomial(c_n, y0)
                    p_signal = 1.0 - (1.0 - eta) ** n_photons
                    n_sig = rng.binomial(c_n - n_bg, p_signal)
                    # Dead-time survival thinning, then errors: a pulse whose
                    # background fired errs half the time, a signal-only
                    # detection errs with the misalignment probability.
                    n_bg = rng.binomial(n_bg, f_dead)
                    n_sig = rng.binomial(n_sig, f_dead)
                    clicks = n_bg + n_sig
                    errors = rng.binomial(n_bg, 0.5) + rng.binomial(n_sig, e_mis)
                    counts[f"n_{basis}_{key}"] += int(clicks)
                    counts[f"m_{basis}_{key}"] += int(errors)
                    if n_photons <= 1:
                        truth[f"s_{basis}{n_photons}"] += int(clicks)
                        truth[f"m_{basis}{n_photons}"] += int(errors)
    return TallySet(n_sent=float(n_sent), truth=TruePhotonCounts(**truth), **{k: float(v) for k, v in counts.items()})
