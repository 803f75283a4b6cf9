"""Command-line driver: scenario files in, CSV/JSON tables out.

Every command is a deterministic batch job: the same scenario file and
seed produce byte-identical output files. Exit codes: 0 success, 2
validation failure, 3 aborted-key outcome.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .channel import expected_tallies, monte_carlo_tallies
from .linkbudget import LinkBudgetBreakdown, compute_breakdowns
from .optimizer import ParamVector, evaluate_params, optimize_pass, sweep_max_elevation
from .relay import KeyStore, recover
from .scenario import Scenario, ScenarioError, load_bundled_scenario, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ABORTED = 3


def _load(ref: str) -> Scenario:
    if ref.startswith("bundled:"):
        return load_bundled_scenario(ref.removeprefix("bundled:"))
    return load_scenario(ref)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _report(out_dir: Path, scenario: Scenario | None, command: str, seed: int, outputs: list[str]) -> None:
    doc = {
        "command": command,
        "outputs": sorted(outputs),
        "scenario_digest": scenario.digest() if scenario else None,
        "scenario_name": scenario.name if scenario else None,
        "seed": seed,
        "toolkit_version": __version__,
    }
    _write(out_dir, "report.json", _json_text(doc))


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _rows_to_json(header: list[str], rows: list[list]) -> str:
    return _json_text([dict(zip(header, row)) for row in rows])


def _emit_table(args, name: str, header: list[str], rows: list[list]) -> list[str]:
    out_dir = Path(args.out)
    if args.format == "json":
        filename = f"{name}.json"
        _write(out_dir, filename, _rows_to_json(header, rows))
    else:
        filename = f"{name}.csv"
        _write(out_dir, filename, _csv(header, rows))
    return [filename]


def cmd_pass(args) -> int:
    scenario = _load(args.scenario)
    pass_geometry = scenario.synth_pass()
    header = ["t_s", "elevation_deg", "slant_range_km"]
    rows = [[s.t_s, s.elevation_deg, s.slant_range_km] for s in pass_geometry.samples]
    outputs = _emit_table(args, "pass", header, rows)
    _report(Path(args.out), scenario, "pass", args.seed, outputs)
    return EXIT_OK


def cmd_budget(args) -> int:
    scenario = _load(args.scenario)
    pass_geometry = scenario.synth_pass()
    breakdowns = compute_breakdowns(
        pass_geometry, scenario.transmitter, scenario.receiver, scenario.atmosphere
    )
    header = (
        ["t_s", "elevation_deg", "slant_range_km"]
        + list(LinkBudgetBreakdown.TERM_FIELDS)
        + ["total_db", "eta"]
    )
    rows = []
    for sample, brk in zip(pass_geometry.samples, breakdowns):
        rows.append(
            [sample.t_s, sample.elevation_deg, sample.slant_range_km]
            + [getattr(brk, f) for f in LinkBudgetBreakdown.TERM_FIELDS]
            + [brk.total_db, brk.eta]
        )
    outputs = _emit_table(args, "budget", header, rows)
    _report(Path(args.out), scenario, "budget", args.seed, outputs)
    return EXIT_OK


def _params_from_args(args, scenario: Scenario) -> ParamVector:
    src = scenario.source
    return ParamVector(
        mu=args.mu if args.mu is not None else src.signal_intensity,
        nu=args.nu if args.nu is not None else src.decoy_intensity,
        p_mu=args.p_mu if args.p_mu is not None else src.p_mu,
        p_nu=args.p_nu if args.p_nu is not None else src.p_nu,
        p_z=args.p_z if args.p_z is not None else src.p_z_alice,
        min_elevation_deg=(
            args.min_elevation
            if args.min_elevation is not None
            else scenario.station.min_elevation_deg
        ),
    )


def cmd_skl(args) -> int:
    scenario = _load(args.scenario)
    params = _params_from_args(args, scenario)
    result = evaluate_params(
        scenario.synth_pass(), scenario.hardware(), scenario.security,
        scenario.n_decoys, params,
    )
    doc = {
        "params": asdict(params),
        "skl_bits": result.skl_bits,
        "lambda_ec_bits": result.lambda_ec_bits,
        "aborted": result.aborted,
        "diagnostics": result.diagnostics,
        "n_decoys": scenario.n_decoys,
    }
    outputs = ["skl.json"]
    _write(Path(args.out), "skl.json", _json_text(doc))
    _report(Path(args.out), scenario, "skl", args.seed, outputs)
    return EXIT_ABORTED if result.aborted else EXIT_OK


def cmd_optimize(args) -> int:
    scenario = _load(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "optimize_trace.csv"
    params, result = optimize_pass(
        scenario.synth_pass(), scenario.hardware(), scenario.security,
        scenario.n_decoys, scenario.optimizer, trace_path=trace_path,
    )
    doc = {
        "params": asdict(params),
        "skl_bits": result.skl_bits,
        "lambda_ec_bits": result.lambda_ec_bits,
        "aborted": result.aborted,
        "diagnostics": result.diagnostics,
        "n_decoys": scenario.n_decoys,
        "trace": trace_path.name,
    }
    outputs = ["optimize.json", trace_path.name]
    _write(out_dir, "optimize.json", _json_text(doc))
    _report(out_dir, scenario, "optimize", args.seed, outputs)
    return EXIT_ABORTED if result.aborted else EXIT_OK


def cmd_sweep_elevation(args) -> int:
    scenario = _load(args.scenario)
    max_elevations = [float(v) for v in args.max_elevations.split(",") if v.strip()]
    if not max_elevations:
        raise ScenarioError("sweep-elevation needs at least one max elevation")
    rows_raw = sweep_max_elevation(
        scenario.orbit, scenario.station.min_elevation_deg, max_elevations,
        scenario.hardware(), scenario.security, scenario.n_decoys,
        scenario.optimizer, scenario.sample_dt_s,
    )
    header = ["max_elevation_deg", "skl_bits", "mu", "nu", "p_mu", "p_nu", "p_z", "min_elevation_deg"]
    rows = [[row.get(h, 0.0) for h in header] for row in rows_raw]
    outputs = _emit_table(args, "sweep_elevation", header, rows)
    _report(Path(args.out), scenario, "sweep-elevation", args.seed, outputs)
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    scenario = _load(args.scenario)
    pass_geometry = scenario.synth_pass()
    breakdowns = compute_breakdowns(
        pass_geometry, scenario.transmitter, scenario.receiver, scenario.atmosphere
    )
    thinning = args.thinning
    source = scenario.source
    det = scenario.detector
    min_elev = scenario.station.min_elevation_deg
    expected = expected_tallies(pass_geometry, breakdowns, source, det, min_elev).scaled(
        1.0 / thinning
    )
    fields = [
        "n_z_mu", "n_z_nu", "n_z_vac", "n_x_mu", "n_x_nu", "n_x_vac",
        "m_z_mu", "m_z_nu", "m_z_vac", "m_x_mu", "m_x_nu", "m_x_vac",
    ]
    if not source.vacuum_included:
        fields = [f for f in fields if not f.endswith("_vac")]
    per_seed = []
    all_ok = True
    for i in range(args.seeds):
        seed = args.seed + i
        mc = monte_carlo_tallies(
            seed, pass_geometry, breakdowns, source, det, min_elev, thinning=thinning
        )
        checks = {}
        for name in fields:
            exp = getattr(expected, name)
            got = getattr(mc, name)
            sigma = max(exp, 1.0) ** 0.5
            z = (got - exp) / sigma
            checks[name] = {"expected": exp, "observed": got, "z": z, "ok": abs(z) <= 3.0}
            all_ok = all_ok and abs(z) <= 3.0
        per_seed.append({"seed": seed, "checks": checks})
    doc = {
        "thinning": thinning,
        "n_seeds": args.seeds,
        "all_within_3_sigma": all_ok,
        "results": per_seed,
    }
    outputs = ["mc_validate.json"]
    _write(Path(args.out), "mc_validate.json", _json_text(doc))
    _report(Path(args.out), scenario, "mc-validate", args.seed, outputs)
    return EXIT_OK if all_ok else EXIT_VALIDATION


def cmd_relay_demo(args) -> int:
    lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
    if not lengths or any(n <= 0 or n % 8 for n in lengths):
        raise ScenarioError("relay-demo lengths must be positive multiples of 8 bits")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    store = KeyStore()
    transcript = []
    all_ok = True
    for n_bits in lengths:
        k_a = rng.bytes(n_bits // 8)
        k_b = rng.bytes(n_bits // 8)
        id_a = store.store_key("alice", k_a)
        id_b = store.store_key("bob", k_b)
        message = store.combine_and_broadcast(id_a, id_b)
        recovered = recover(k_b, message)
        ok = recovered == k_a
        all_ok = all_ok and ok
        transcript.append(
            {
                "n_bits": n_bits,
                "key_id_a": id_a,
                "key_id_b": id_b,
                "payload_hex": message.payload.hex(),
                "recovered_equals_k_a": ok,
            }
        )
    doc = {
        "transcript": transcript,
        "consumed_bits": store.consumed_bits,
        "delivered_bits": store.delivered_bits,
        "residual_secret_bits": store.residual_secret_bits(),
        "round_trip_ok": all_ok,
    }
    outputs = ["relay_demo.json"]
    _write(Path(args.out), "relay_demo.json", _json_text(doc))
    _report(Path(args.out), None, "relay-demo", args.seed, outputs)
    return EXIT_OK if all_ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satqkd",
        description="Satellite QKD mission analysis: passes, link budgets, finite-key rates.",
    )
    parser.add_argument("--version", action="version", version=f"satqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario JSON path, or bundled:<name>")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("pass", help="Elevation/range time series of the pass.")
    common(p)
    p.set_defaults(func=cmd_pass)

    p = sub.add_parser("budget", help="Per-sample link budget breakdown.")
    common(p)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("skl", help="Secure key length at fixed protocol parameters.")
    common(p)
    for flag in ("--mu", "--nu", "--p-mu", "--p-nu", "--p-z", "--min-elevation"):
        p.add_argument(flag, type=float, default=None)
    p.set_defaults(func=cmd_skl)

    p = sub.add_parser("optimize", help="Whole-pass protocol parameter optimization.")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep-elevation", help="Optimized SKL vs pass peak elevation.")
    common(p)
    p.add_argument("--max-elevations", default="30,40,50,60,70,80,90",
                   help="comma-separated peak elevations in degrees")
    p.set_defaults(func=cmd_sweep_elevation)

    p = sub.add_parser("mc-validate", help="Monte Carlo vs expected tallies, 3-sigma check.")
    common(p)
    p.add_argument("--seeds", type=int, default=10, help="number of Monte Carlo seeds")
    p.add_argument("--thinning", type=float, default=1e5,
                   help="pulse thinning factor for desk-scale runs")
    p.set_defaults(func=cmd_mc_validate)

    p = sub.add_parser("relay-demo", help="Trusted-node XOR relay round trip.")
    common(p, scenario=False)
    p.add_argument("--lengths", default="1024,4096",
                   help="comma-separated key lengths in bits (multiples of 8)")
    p.set_defaults(func=cmd_relay_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
