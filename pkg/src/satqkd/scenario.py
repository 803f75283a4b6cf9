"""Declarative scenario files driving the pipeline.

A scenario is one JSON document with the sections orbit, station,
transmitter, receiver, atmosphere, detector, source, security and
optimizer, plus the encoding and decoy-count selectors. Loading is
fail-closed: unknown fields are rejected and every module-level invariant
is re-validated, with errors naming the offending field.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .channel import DetectorSpec, SourceSpec
from .finitekey import SecurityParams
from .linkbudget import (
    AtmosphereModel,
    ReceiverSpec,
    TransmitterSpec,
    load_elevation_loss_table,
)
from .optimizer import HardwareStack, OptimizerConfig
from .orbit import GroundStation, OrbitSpec, PassGeometry, synth_pass

ENCODINGS = ("polarisation", "time_bin")
# Misalignment defaults by encoding: time-bin arrival separation keeps the
# Z basis nearly error free, the interferometric X basis does not benefit.
DEFAULT_MISALIGNMENT = {
    "polarisation": {"misalignment_z": 0.01, "misalignment_x": 0.01},
    "time_bin": {"misalignment_z": 0.001, "misalignment_x": 0.01},
}
TIME_BIN_SLOTS_PER_QUBIT = 3


class ScenarioError(ValueError):
    """Raised when a scenario document is malformed or inconsistent."""


def _require(section: dict, field: str, where: str):
    if field not in section:
        raise ScenarioError(f"missing field {where}.{field}")
    return section[field]


def _check_known(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown field {where}.{sorted(unknown)[0]}")


def _wavelength_map(raw: dict, where: str) -> dict[float, float]:
    out = {}
    for key, value in raw.items():
        try:
            out[float(key)] = float(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"non-numeric entry in {where}: {key!r}: {value!r}") from None
    return out


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: every section as its module-level spec type."""

    name: str
    encoding: str
    n_decoys: int
    sample_dt_s: float
    orbit: OrbitSpec
    station: GroundStation
    transmitter: TransmitterSpec
    receiver: ReceiverSpec
    atmosphere: AtmosphereModel
    detector: DetectorSpec
    source: SourceSpec
    security: SecurityParams
    optimizer: OptimizerConfig
    raw: dict

    def hardware(self) -> HardwareStack:
        return HardwareStack(
            transmitter=self.transmitter,
            receiver=self.receiver,
            atmosphere=self.atmosphere,
            detector=self.detector,
            source=self.source,
        )

    def synth_pass(self) -> PassGeometry:
        return synth_pass(self.orbit, self.station, self.sample_dt_s)

    def digest(self) -> str:
        """Content hash, stable under field reordering."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


TOP_LEVEL_FIELDS = {
    "name", "encoding", "n_decoys", "sample_dt_s", "orbit", "station", "transmitter",
    "receiver", "atmosphere", "detector", "source", "security", "optimizer",
}


def _wrap(section: str, exc: Exception) -> ScenarioError:
    return ScenarioError(f"{section}: {exc}")


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _check_known(doc, TOP_LEVEL_FIELDS, "scenario")

    name = str(_require(doc, "name", "scenario"))
    encoding = _require(doc, "encoding", "scenario")
    if encoding not in ENCODINGS:
        raise ScenarioError(f"scenario.encoding must be one of {ENCODINGS}, got {encoding!r}")
    n_decoys = _require(doc, "n_decoys", "scenario")
    if n_decoys not in (1, 2):
        raise ScenarioError(f"scenario.n_decoys must be 1 or 2, got {n_decoys!r}")
    sample_dt_s = float(doc.get("sample_dt_s", 1.0))
    if sample_dt_s <= 0:
        raise ScenarioError(f"scenario.sample_dt_s must be > 0, got {sample_dt_s}")

    sections = {}
    for key in ("orbit", "station", "transmitter", "receiver", "atmosphere",
                "detector", "source", "security", "optimizer"):
        section = _require(doc, key, "scenario")
        if not isinstance(section, dict):
            raise ScenarioError(f"scenario.{key} must be an object")
        sections[key] = section

    o = sections["orbit"]
    _check_known(o, {"altitude_km", "inclination_deg"}, "orbit")
    try:
        orbit = OrbitSpec(
            altitude_km=float(_require(o, "altitude_km", "orbit")),
            inclination_deg=float(_require(o, "inclination_deg", "orbit")),
        )
    except ValueError as exc:
        raise _wrap("orbit", exc) from None

    s = sections["station"]
    _check_known(s, {"min_elevation_deg", "max_elevation_deg"}, "station")
    try:
        station = GroundStation(
            min_elevation_deg=float(_require(s, "min_elevation_deg", "station")),
            max_elevation_deg=float(_require(s, "max_elevation_deg", "station")),
        )
    except ValueError as exc:
        raise _wrap("station", exc) from None

    t = sections["transmitter"]
    _check_known(
        t,
        {"aperture_diam_m", "wavelength_nm", "truncation_ratio", "m_squared", "pointing_loss_db"},
        "transmitter",
    )
    try:
        transmitter = TransmitterSpec(
            aperture_diam_m=float(_require(t, "aperture_diam_m", "transmitter")),
            wavelength_nm=float(_require(t, "wavelength_nm", "transmitter")),
            truncation_ratio=float(_require(t, "truncation_ratio", "transmitter")),
            m_squared=float(_require(t, "m_squared", "transmitter")),
            pointing_loss_db=float(_require(t, "pointing_loss_db", "transmitter")),
        )
    except ValueError as exc:
        raise _wrap("transmitter", exc) from None

    r = sections["receiver"]
    _check_known(
        r,
        {
            "primary_diam_m", "obscuration_diam_m", "coupling_mode", "coupling_loss_db",
            "path_loss_db", "fov_half_angle_urad", "filter_bandwidth_nm",
            "effective_focal_length_m",
        },
        "receiver",
    )
    try:
        receiver = ReceiverSpec(
            primary_diam_m=float(_require(r, "primary_diam_m", "receiver")),
            obscuration_diam_m=float(_require(r, "obscuration_diam_m", "receiver")),
            coupling_mode=str(_require(r, "coupling_mode", "receiver")),
            coupling_loss_db=float(_require(r, "coupling_loss_db", "receiver")),
            path_loss_db=float(_require(r, "path_loss_db", "receiver")),
            fov_half_angle_urad=float(_require(r, "fov_half_angle_urad", "receiver")),
            filter_bandwidth_nm=float(_require(r, "filter_bandwidth_nm", "receiver")),
            effective_focal_length_m=float(_require(r, "effective_focal_length_m", "receiver")),
        )
    except ValueError as exc:
        raise _wrap("receiver", exc) from None

    a = sections["atmosphere"]
    _check_known(
        a, {"zenith_loss_db", "sky_radiance_w_m2_sr_nm", "elevation_table_path"}, "atmosphere"
    )
    elevation_table = None
    if "elevation_table_path" in a and a["elevation_table_path"] is not None:
        elevation_table = load_elevation_loss_table(a["elevation_table_path"])
    try:
        atmosphere = AtmosphereModel(
            zenith_loss_db=_wavelength_map(
                _require(a, "zenith_loss_db", "atmosphere"), "atmosphere.zenith_loss_db"
            ),
            sky_radiance_w_m2_sr_nm=_wavelength_map(
                _require(a, "sky_radiance_w_m2_sr_nm", "atmosphere"),
                "atmosphere.sky_radiance_w_m2_sr_nm",
            ),
            elevation_table=elevation_table,
        )
    except ValueError as exc:
        raise _wrap("atmosphere", exc) from None
    if elevation_table is None and transmitter.wavelength_nm not in atmosphere.zenith_loss_db:
        raise ScenarioError(
            "atmosphere.zenith_loss_db lacks the transmitter wavelength "
            f"{transmitter.wavelength_nm} nm"
        )

    d = sections["detector"]
    _check_known(
        d,
        {
            "efficiency", "dark_count_rate_hz", "dead_time_ns", "timing_jitter_ps",
            "background_rate_hz", "n_detectors", "gate_width_ns",
        },
        "detector",
    )
    try:
        detector = DetectorSpec(
            efficiency=float(_require(d, "efficiency", "detector")),
            dark_count_rate_hz=float(_require(d, "dark_count_rate_hz", "detector")),
            dead_time_ns=float(_require(d, "dead_time_ns", "detector")),
            timing_jitter_ps=float(_require(d, "timing_jitter_ps", "detector")),
            background_rate_hz=float(_require(d, "background_rate_hz", "detector")),
            n_detectors=int(d.get("n_detectors", 4)),
            gate_width_ns=(float(d["gate_width_ns"]) if d.get("gate_width_ns") is not None else None),
        )
    except ValueError as exc:
        raise _wrap("detector", exc) from None

    src = sections["source"]
    _check_known(
        src,
        {
            "pulse_rate_hz", "signal_intensity", "decoy_intensity", "p_mu", "p_nu",
            "p_z_alice", "p_z_bob", "vacuum_included", "misalignment_z", "misalignment_x",
            "hold_slot_rate",
        },
        "source",
    )
    defaults = DEFAULT_MISALIGNMENT[encoding]
    pulse_rate = float(_require(src, "pulse_rate_hz", "source"))
    # Optional slot-rate accounting: a time-bin qubit occupies several pulse
    # slots, so holding the slot rate fixed divides the qubit rate.
    if bool(src.get("hold_slot_rate", False)):
        if encoding != "time_bin":
            raise ScenarioError("source.hold_slot_rate only applies to time_bin encoding")
        pulse_rate /= TIME_BIN_SLOTS_PER_QUBIT
    vacuum_included = bool(src.get("vacuum_included", n_decoys == 2))
    if vacuum_included != (n_decoys == 2):
        raise ScenarioError(
            f"source.vacuum_included must be {n_decoys == 2} for n_decoys={n_decoys}"
        )
    try:
        source = SourceSpec(
            pulse_rate_hz=pulse_rate,
            signal_intensity=float(_require(src, "signal_intensity", "source")),
            decoy_intensity=float(_require(src, "decoy_intensity", "source")),
            p_mu=float(_require(src, "p_mu", "source")),
            p_nu=float(_require(src, "p_nu", "source")),
            p_z_alice=float(_require(src, "p_z_alice", "source")),
            p_z_bob=float(_require(src, "p_z_bob", "source")),
            vacuum_included=vacuum_included,
            misalignment_z=float(src.get("misalignment_z", defaults["misalignment_z"])),
            misalignment_x=float(src.get("misalignment_x", defaults["misalignment_x"])),
        )
    except ValueError as exc:
        raise _wrap("source", exc) from None

    sec = sections["security"]
    _check_known(sec, {"eps_sec", "eps_corr", "f_ec"}, "security")
    try:
        security = SecurityParams(
            eps_sec=float(_require(sec, "eps_sec", "security")),
            eps_corr=float(_require(sec, "eps_corr", "security")),
            f_ec=float(_require(sec, "f_ec", "security")),
        )
    except ValueError as exc:
        raise _wrap("security", exc) from None

    opt = sections["optimizer"]
    _check_known(
        opt, {"coarse_grid_steps", "refine_iterations", "rel_tolerance", "rng_seed"}, "optimizer"
    )
    try:
        optimizer = OptimizerConfig(
            coarse_grid_steps=int(opt.get("coarse_grid_steps", 8)),
            refine_iterations=int(opt.get("refine_iterations", 2)),
            rel_tolerance=float(opt.get("rel_tolerance", 1e-3)),
            rng_seed=int(opt.get("rng_seed", 0)),
        )
    except ValueError as exc:
        raise _wrap("optimizer", exc) from None

    return Scenario(
        name=name,
        encoding=encoding,
        n_decoys=int(n_decoys),
        sample_dt_s=sample_dt_s,
        orbit=orbit,
        station=station,
        transmitter=transmitter,
        receiver=receiver,
        atmosphere=atmosphere,
        detector=detector,
        source=source,
        security=security,
        optimizer=optimizer,
        raw=doc,
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc)


def bundled_scenario_names() -> list[str]:
    files = resources.files("satqkd").joinpath("scenarios")
    return sorted(p.name.removesuffix(".json") for p in files.iterdir() if p.name.endswith(".json"))


def load_bundled_scenario(name: str) -> Scenario:
    ref = resources.files("satqkd").joinpath("scenarios").joinpath(f"{name}.json")
    if not ref.is_file():
        raise ScenarioError(
            f"no bundled scenario {name!r}; available: {', '.join(bundled_scenario_names())}"
        )
    return scenario_from_dict(json.loads(ref.read_text()))
