"""Whole-pass protocol parameter optimization.

The security analysis requires one parameter set (intensities, their
probabilities, basis bias) for the whole accumulation block, and the
post-processing minimum elevation is itself a parameter. The search is a
deterministic coarse grid over the continuous parameters crossed with an
exhaustive 1-degree scan of the minimum elevation, followed by
coordinate-wise golden-section refinement.

For speed, the per-sample detection statistics are folded into suffix sums
over the elevation-sorted samples once per candidate, which yields the
tallies of every elevation cut at once; the finite-key formula is then
evaluated vectorized across cuts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import DetectorSpec, SourceSpec, background_yield, dead_time_factor, expected_tallies
from .finitekey import (
    SecurityParams,
    SklResult,
    _entropy_unchecked,
    skl_from_tallies,
    skl_real_arrays,
)
from .linkbudget import AtmosphereModel, ReceiverSpec, TransmitterSpec, compute_breakdowns
from .orbit import GroundStation, OrbitSpec, PassGeometry, synth_pass

MIN_ELEVATION_GRID = np.arange(20.0, 81.0, 1.0)
MU_BOX = (0.1, 1.0)
NU_MARGIN = 0.01
NU_MIN = 0.01
P_MU_BOX = (0.2, 0.95)
P_NU_BOX = (0.01, 0.79)
P_Z_BOX = (0.3, 0.97)
MAX_P_SUM = 0.99  # two-decoy: keep at least 1% vacuum pulses

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizerError(ValueError):
    """Raised for invalid optimizer configurations or parameter vectors."""


@dataclass(frozen=True)
class ParamVector:
    """Protocol parameters subject to whole-pass optimization."""

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    p_z: float
    min_elevation_deg: float

    def __post_init__(self) -> None:
        if not 0.0 < self.nu < self.mu <= 1.0:
            raise OptimizerError(f"require 0 < nu < mu <= 1, got (mu={self.mu}, nu={self.nu})")
        if self.p_mu <= 0 or self.p_nu <= 0 or self.p_mu + self.p_nu > 1.0 + 1e-12:
            raise OptimizerError(
                f"require p_mu, p_nu > 0 with p_mu + p_nu <= 1, got ({self.p_mu}, {self.p_nu})"
            )
        if not 0.0 < self.p_z < 1.0:
            raise OptimizerError(f"require 0 < p_z < 1, got {self.p_z}")
        if not 20.0 <= self.min_elevation_deg <= 80.0:
            raise OptimizerError(
                f"min_elevation_deg must be within [20, 80], got {self.min_elevation_deg}"
            )


@dataclass(frozen=True)
class OptimizerConfig:
    """Deterministic search configuration."""

    coarse_grid_steps: int = 8
    refine_iterations: int = 2
    rel_tolerance: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.coarse_grid_steps < 2:
            raise OptimizerError(f"coarse_grid_steps must be >= 2, got {self.coarse_grid_steps}")
        if self.refine_iterations < 0:
            raise OptimizerError(f"refine_iterations must be >= 0, got {self.refine_iterations}")
        if self.rel_tolerance <= 0:
            raise OptimizerError(f"rel_tolerance must be > 0, got {self.rel_tolerance}")


@dataclass(frozen=True)
class HardwareStack:
    """Everything on the optical path plus the protocol source template."""

    transmitter: TransmitterSpec
    receiver: ReceiverSpec
    atmosphere: AtmosphereModel
    detector: DetectorSpec
    source: SourceSpec


def source_with_params(template: SourceSpec, params: ParamVector, n_decoys: int) -> SourceSpec:
    """Template source with the candidate protocol parameters applied.

    The single optimized basis bias is applied on both sides.
    """
    return replace(
        template,
        signal_intensity=params.mu,
        decoy_intensity=params.nu,
        p_mu=params.p_mu,
        p_nu=params.p_nu,
        p_z_alice=params.p_z,
        p_z_bob=params.p_z,
        vacuum_included=(n_decoys == 2),
    )


class _PassChannel:
    """Per-pass precomputation: elevation-sorted transmissions and the
    suffix-sum bookkeeping shared by all candidate evaluations."""

    def __init__(
        self,
        pass_geometry: PassGeometry,
        hardware: HardwareStack,
        security: SecurityParams,
        n_decoys: int,
    ):
        self.security = security
        self.n_decoys = n_decoys
        self.detector = hardware.detector
        self.template = hardware.source
        breakdowns = compute_breakdowns(
            pass_geometry, hardware.transmitter, hardware.receiver, hardware.atmosphere
        )
        elevations = np.array(pass_geometry.elevations_deg())
        order = np.argsort(elevations, kind="stable")
        self.elev_sorted = elevations[order]
        eta = np.array([b.eta for b in breakdowns]) * hardware.detector.efficiency
        self.eta_sorted = eta[order]
        self.pulses_per_sample = hardware.source.pulse_rate_hz * pass_geometry.sample_dt_s
        self.y0 = background_yield(hardware.detector, hardware.source.pulse_rate_hz)
        # cut_start[j]: first sorted index with elevation >= cut j
        self.cut_start = np.searchsorted(self.elev_sorted, MIN_ELEVATION_GRID, side="left")

    def _presift_cut_matrix(self, mu: float, nu: float, p_mu: float, p_nu: float) -> np.ndarray:
        """Suffix-summed per-cut contributions before basis sifting.

        Rows: detections per intensity (mu, nu, vac), then Z errors, then X
        errors; shape (9, n_cuts). The Z/X split is only a scalar sifting
        factor, applied later, which lets one call serve a whole p_z grid.
        """
        y0 = self.y0
        eta = self.eta_sorted
        p_vac = 1.0 - p_mu - p_nu if self.n_decoys == 2 else 0.0
        exp_mu = np.exp(-mu * eta)
        exp_nu = np.exp(-nu * eta)
        d_mu = 1.0 - (1.0 - y0) * exp_mu
        d_nu = 1.0 - (1.0 - y0) * exp_nu
        mean_gain = p_mu * d_mu + p_nu * d_nu + p_vac * y0
        f_dead = dead_time_factor(
            self.template.pulse_rate_hz * mean_gain, self.detector.dead_time_ns
        )
        mis_z = self.template.misalignment_z
        mis_x = self.template.misalignment_x
        scale = self.pulses_per_sample * f_dead
        per_sample = np.empty((9, len(eta)))
        for i, (p_k, d_k, one_minus_exp) in enumerate(
            ((p_mu, d_mu, 1.0 - exp_mu), (p_nu, d_nu, 1.0 - exp_nu), (p_vac, y0, 0.0))
        ):
            base = scale * p_k
            per_sample[i] = base * d_k
            per_sample[3 + i] = base * (0.5 * y0 + mis_z * one_minus_exp)
            per_sample[6 + i] = base * (0.5 * y0 + mis_x * one_minus_exp)
        suffix = np.concatenate(
            [np.cumsum(per_sample[:, ::-1], axis=1)[:, ::-1], np.zeros((9, 1))], axis=1
        )
        return suffix[:, self.cut_start]

    def skl_matrix(
        self, mu: float, nu: float, p_mu: float, p_nu: float, p_z_values: np.ndarray
    ) -> np.ndarray:
        """Unfloored key length, shape (len(p_z_values), n_cuts)."""
        cut = self._presift_cut_matrix(mu, nu, p_mu, p_nu)
        p_z = np.asarray(p_z_values, dtype=float)[:, None]
        sift_z = p_z * p_z
        sift_x = (1.0 - p_z) ** 2
        t = {}
        for i, key in enumerate(("mu", "nu", "vac")):
            t[f"n_z_{key}"] = cut[i] * sift_z
            t[f"n_x_{key}"] = cut[i] * sift_x
            t[f"m_z_{key}"] = cut[3 + i] * sift_z
            t[f"m_x_{key}"] = cut[6 + i] * sift_x
        p_vac = 1.0 - p_mu - p_nu if self.n_decoys == 2 else 0.0
        l_real, _ = skl_real_arrays(
            t, mu, nu, p_mu, p_nu, p_vac, self.security, self.n_decoys
        )
        return l_real

    def objective(self, mu: float, nu: float, p_mu: float, p_nu: float, p_z: float) -> tuple[float, int]:
        """Best unfloored key length over the elevation grid; ties resolve to
        the lower elevation (np.argmax takes the first maximum)."""
        l_real = self.skl_matrix(mu, nu, p_mu, p_nu, np.array([p_z]))[0]
        idx = int(np.argmax(l_real))
        return float(l_real[idx]), idx


def _grid(lo: float, hi: float, steps: int) -> np.ndarray:
    return np.linspace(lo, hi, steps)


def _golden_max(f, lo: float, hi: float, abs_tol: float, max_iter: int = 80) -> tuple[float, float]:
    """Golden-section maximization of f on [lo, hi]; returns (x, f(x))."""
    if hi <= lo:
        return lo, f(lo)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 >= f2 else (x2, f2)
    for _ in range(max_iter):
        if b - a <= abs_tol:
            break
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        if f1 > best_f:
            best_x, best_f = x1, f1
        if f2 > best_f:
            best_x, best_f = x2, f2
    return best_x, best_f


def _coarse_blocks(config: OptimizerConfig, n_decoys: int):
    """Deterministic (mu, nu, p_mu, p_nu) blocks; p_z is gridded per block."""
    g = config.coarse_grid_steps
    for mu in _grid(*MU_BOX, g):
        for nu in _grid(NU_MIN, mu - NU_MARGIN, g):
            for p_mu in _grid(*P_MU_BOX, g):
                if n_decoys == 2:
                    nu_hi = min(P_NU_BOX[1], MAX_P_SUM - p_mu)
                    if nu_hi <= P_NU_BOX[0]:
                        continue
                    p_nu_values = _grid(P_NU_BOX[0], nu_hi, g)
                else:
                    p_nu_values = [1.0 - p_mu]
                for p_nu in p_nu_values:
                    yield mu, nu, p_mu, p_nu


def _coarse_candidates(config: OptimizerConfig, n_decoys: int):
    """Deterministic candidate generator over all continuous parameters."""
    p_z_values = _grid(*P_Z_BOX, config.coarse_grid_steps)
    for mu, nu, p_mu, p_nu in _coarse_blocks(config, n_decoys):
        for p_z in p_z_values:
            yield mu, nu, p_mu, p_nu, p_z


def optimize_pass(
    pass_geometry: PassGeometry,
    hardware: HardwareStack,
    security: SecurityParams,
    n_decoys: int,
    config: OptimizerConfig | None = None,
    trace_path: str | Path | None = None,
) -> tuple[ParamVector, SklResult]:
    """Maximize the whole-pass secure key length.

    Returns the best parameter vector (including the post-processing
    minimum elevation) and its key length, recomputed through the scalar
    tally/bound path for the returned vector. Deterministic for a given
    config. When trace_path is set, every coarse candidate and the final
    point are logged for the dominance audit.
    """
    config = config or OptimizerConfig()
    channel = _PassChannel(pass_geometry, hardware, security, n_decoys)
    trace_rows: list[str] | None = [] if trace_path is not None else None

    p_z_values = _grid(*P_Z_BOX, config.coarse_grid_steps)
    best = (-math.inf, 0, (0.5, 0.1, 0.7, 0.15, 0.9))
    for mu_c, nu_c, p_mu_c, p_nu_c in _coarse_blocks(config, n_decoys):
        matrix = channel.skl_matrix(mu_c, nu_c, p_mu_c, p_nu_c, p_z_values)
        cut_idx_per_pz = np.argmax(matrix, axis=1)
        value_per_pz = matrix[np.arange(len(p_z_values)), cut_idx_per_pz]
        for j, p_z_c in enumerate(p_z_values):
            value, cut_idx = float(value_per_pz[j]), int(cut_idx_per_pz[j])
            if trace_rows is not None:
                trace_rows.append(
                    "coarse,%r,%r,%r,%r,%r,%r,%r"
                    % (mu_c, nu_c, p_mu_c, p_nu_c, p_z_c, MIN_ELEVATION_GRID[cut_idx], value)
                )
            if value > best[0]:
                best = (value, cut_idx, (mu_c, nu_c, p_mu_c, p_nu_c, float(p_z_c)))

    value, cut_idx, cand = best
    mu, nu, p_mu, p_nu, p_z = cand
    span = {
        "mu": MU_BOX[1] - MU_BOX[0],
        "nu": MU_BOX[1] - NU_MIN,
        "p_mu": P_MU_BOX[1] - P_MU_BOX[0],
        "p_nu": P_NU_BOX[1] - P_NU_BOX[0],
        "p_z": P_Z_BOX[1] - P_Z_BOX[0],
    }
    for _ in range(config.refine_iterations):
        current = {"mu": mu, "nu": nu, "p_mu": p_mu, "p_nu": p_nu, "p_z": p_z}

        def boxes() -> dict[str, tuple[float, float]]:
            out = {
                "mu": (max(MU_BOX[0], current["nu"] + NU_MARGIN), MU_BOX[1]),
                "nu": (NU_MIN, current["mu"] - NU_MARGIN),
                "p_z": P_Z_BOX,
            }
            if n_decoys == 2:
                out["p_mu"] = (P_MU_BOX[0], min(P_MU_BOX[1], MAX_P_SUM - current["p_nu"]))
                out["p_nu"] = (P_NU_BOX[0], min(P_NU_BOX[1], MAX_P_SUM - current["p_mu"]))
            else:
                out["p_mu"] = P_MU_BOX
            return out

        dims = ("mu", "nu", "p_mu", "p_nu", "p_z") if n_decoys == 2 else ("mu", "nu", "p_mu", "p_z")
        for dim in dims:
            lo, hi = boxes()[dim]
            if hi <= lo:
                continue

            def line(x: float) -> float:
                trial = dict(current)
                trial[dim] = x
                if n_decoys == 1:
                    trial["p_nu"] = 1.0 - trial["p_mu"]
                return channel.objective(
                    trial["mu"], trial["nu"], trial["p_mu"], trial["p_nu"], trial["p_z"]
                )[0]

            x, fx = _golden_max(line, lo, hi, abs_tol=config.rel_tolerance * span[dim])
            if fx > value:
                current[dim] = x
                if n_decoys == 1:
                    current["p_nu"] = 1.0 - current["p_mu"]
                value = fx
        mu, nu, p_mu, p_nu, p_z = (
            current["mu"], current["nu"], current["p_mu"], current["p_nu"], current["p_z"],
        )

    value, cut_idx = channel.objective(mu, nu, p_mu, p_nu, p_z)
    params = ParamVector(
        mu=float(mu), nu=float(nu), p_mu=float(p_mu), p_nu=float(p_nu), p_z=float(p_z),
        min_elevation_deg=float(MIN_ELEVATION_GRID[cut_idx]),
    )
    if trace_rows is not None:
        trace_rows.append(
            "final,%r,%r,%r,%r,%r,%r,%r"
            % (mu, nu, p_mu, p_nu, p_z, params.min_elevation_deg, value)
        )
        header = "stage,mu,nu,p_mu,p_nu,p_z,min_elevation_deg,skl_real\n"
        Path(trace_path).write_text(header + "\n".join(trace_rows) + "\n")
    result = evaluate_params(pass_geometry, hardware, security, n_decoys, params)
    return params, result


def evaluate_params(
    pass_geometry: PassGeometry,
    hardware: HardwareStack,
    security: SecurityParams,
    n_decoys: int,
    params: ParamVector,
) -> SklResult:
    """Scalar-path key length for a fixed parameter vector."""
    source = source_with_params(hardware.source, params, n_decoys)
    breakdowns = compute_breakdowns(
        pass_geometry, hardware.transmitter, hardware.receiver, hardware.atmosphere
    )
    tallies = expected_tallies(
        pass_geometry, breakdowns, source, hardware.detector, params.min_elevation_deg
    )
    return skl_from_tallies(tallies, source, security, n_decoys)


def _asymptotic_rate_candidates(
    eta_channel: float,
    hardware: HardwareStack,
    security: SecurityParams,
    n_decoys: int,
    mu: np.ndarray,
    nu: np.ndarray,
    p_mu: np.ndarray,
    p_nu: np.ndarray,
    p_z: np.ndarray,
) -> np.ndarray:
    """Vectorized asymptotic rate over candidate arrays at one transmission."""
    det = hardware.detector
    src = hardware.source
    eta_t = eta_channel * det.efficiency
    y0 = background_yield(det, src.pulse_rate_hz)
    p_vac = (1.0 - p_mu - p_nu) if n_decoys == 2 else np.zeros_like(p_mu)
    d_mu = 1.0 - (1.0 - y0) * np.exp(-mu * eta_t)
    d_nu = 1.0 - (1.0 - y0) * np.exp(-nu * eta_t)
    q = p_mu * d_mu + p_nu * d_nu + p_vac * y0
    err = (
        p_mu * (0.5 * y0 + src.misalignment_z * (1.0 - np.exp(-mu * eta_t)))
        + p_nu * (0.5 * y0 + src.misalignment_z * (1.0 - np.exp(-nu * eta_t)))
        + p_vac * 0.5 * y0
    )
    e_z = np.where(q > 0, err / np.maximum(q, 1e-300), 0.5)
    f_dead = dead_time_factor(src.pulse_rate_hz * q, det.dead_time_ns)
    tau0 = (p_mu * np.exp(-mu) + p_nu * np.exp(-nu) + p_vac)
    tau1 = (p_mu * mu * np.exp(-mu) + p_nu * nu * np.exp(-nu))
    y1 = 1.0 - (1.0 - y0) * (1.0 - eta_t)
    e1_x = (0.5 * y0 + src.misalignment_x * (1.0 - y0) * eta_t) / y1
    rate = p_z * p_z * f_dead * (
        tau0 * y0
        + tau1 * y1 * (1.0 - _entropy_unchecked(np.minimum(e1_x, 0.5)))
        - security.f_ec * q * _entropy_unchecked(np.minimum(e_z, 1.0))
    )
    return np.maximum(rate, 0.0)


def pointwise_asymptotic_profile(
    pass_geometry: PassGeometry,
    hardware: HardwareStack,
    security: SecurityParams,
    n_decoys: int = 2,
    config: OptimizerConfig | None = None,
) -> list[tuple[float, float]]:
    """Per-sample asymptotic rate, protocol parameters re-optimized at each
    point in time; returns (t_s, skr_per_pulse) pairs."""
    config = config or OptimizerConfig()
    breakdowns = compute_breakdowns(
        pass_geometry, hardware.transmitter, hardware.receiver, hardware.atmosphere
    )
    cands = np.array(list(_coarse_candidates(config, n_decoys)))
    mu_c, nu_c, p_mu_c, p_nu_c, p_z_c = cands.T
    profile = []
    for sample, brk in zip(pass_geometry.samples, breakdowns):
        rates = _asymptotic_rate_candidates(
            brk.eta, hardware, security, n_decoys, mu_c, nu_c, p_mu_c, p_nu_c, p_z_c
        )
        idx = int(np.argmax(rates))
        current = {
            "mu": float(mu_c[idx]), "nu": float(nu_c[idx]), "p_mu": float(p_mu_c[idx]),
            "p_nu": float(p_nu_c[idx]), "p_z": float(p_z_c[idx]),
        }
        best = float(rates[idx])

        def scalar_rate(c: dict[str, float]) -> float:
            arr = {k: np.array([v]) for k, v in c.items()}
            return float(
                _asymptotic_rate_candidates(
                    brk.eta, hardware, security, n_decoys,
                    arr["mu"], arr["nu"], arr["p_mu"], arr["p_nu"], arr["p_z"],
                )[0]
            )

        dims = ("mu", "nu", "p_mu", "p_nu", "p_z") if n_decoys == 2 else ("mu", "nu", "p_mu", "p_z")
        for _ in range(config.refine_iterations):
            for dim in dims:
                if dim == "mu":
                    lo, hi = max(MU_BOX[0], current["nu"] + NU_MARGIN), MU_BOX[1]
                elif dim == "nu":
                    lo, hi = NU_MIN, current["mu"] - NU_MARGIN
                elif dim == "p_mu":
                    hi_cap = MAX_P_SUM - current["p_nu"] if n_decoys == 2 else P_MU_BOX[1]
                    lo, hi = P_MU_BOX[0], min(P_MU_BOX[1], hi_cap)
                elif dim == "p_nu":
                    lo, hi = P_NU_BOX[0], min(P_NU_BOX[1], MAX_P_SUM - current["p_mu"])
                else:
                    lo, hi = P_Z_BOX
                if hi <= lo:
                    continue

                def line(x: float) -> float:
                    trial = dict(current)
                    trial[dim] = x
                    if n_decoys == 1:
                        trial["p_nu"] = 1.0 - trial["p_mu"]
                    return scalar_rate(trial)

                x, fx = _golden_max(line, lo, hi, abs_tol=config.rel_tolerance)
                if fx > best:
                    current[dim] = x
                    if n_decoys == 1:
                        current["p_nu"] = 1.0 - current["p_mu"]
                    best = fx
        profile.append((sample.t_s, best))
    return profile


def sweep_max_elevation(
    orbit: OrbitSpec,
    min_elevation_deg: float,
    max_elevations_deg: list[float],
    hardware: HardwareStack,
    security: SecurityParams,
    n_decoys: int,
    config: OptimizerConfig | None = None,
    sample_dt_s: float = 1.0,
) -> list[dict[str, float]]:
    """Optimized SKL for passes of different peak elevations.

    Peak elevations at or below the station cut produce an empty pass and a
    zero-key row.
    """
    rows = []
    for max_elev in max_elevations_deg:
        if max_elev <= min_elevation_deg:
            rows.append({"max_elevation_deg": float(max_elev), "skl_bits": 0.0})
            continue
        station = GroundStation(min_elevation_deg=min_elevation_deg, max_elevation_deg=max_elev)
        pass_geometry = synth_pass(orbit, station, sample_dt_s)
        params, result = optimize_pass(pass_geometry, hardware, security, n_decoys, config)
        rows.append(
            {
                "max_elevation_deg": float(max_elev),
                "skl_bits": float(result.skl_bits),
                "mu": params.mu,
                "nu": params.nu,
                "p_mu": params.p_mu,
                "p_nu": params.p_nu,
                "p_z": params.p_z,
                "min_elevation_deg": params.min_elevation_deg,
            }
        )
    return rows
