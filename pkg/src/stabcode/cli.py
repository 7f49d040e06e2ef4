"""Command-line front end: ``stabcode {design,analyze,simulate} --config FILE``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .design import (
    Family,
    design_sweep,
    efficiency_min_sum_rate,
    feasibility_threshold,
    gaussian_rate,
    performance_sigma_e_sq,
    plan_code,
    sum_rate_lower_bound_indep,
    sweep_to_csv,
    DesignPoint,
)
from .errors import InfeasibleDesign, MarginallyStable, StabcodeError
from .lti import LoopFilters, PlantModel, TransferFunction, closed_loop_maps, min_snr_for_stability
from .presets import independent_scheme, md_scheme, repetition_scheme
from .simulation import SimMetrics, SweepRow, results_to_csv, run_sweep
from .synthesis import SynthesisConfig, synthesize_filters

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_ALL_FAILED = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config parsing
def _tf(obj) -> TransferFunction:
    if isinstance(obj, (int, float)):
        return TransferFunction.constant(float(obj))
    if "num" in obj:
        return TransferFunction.from_json(obj)
    if "poles" in obj:
        return TransferFunction.from_roots(obj.get("zeros", []), obj["poles"], obj.get("gain", 1.0))
    raise ConfigError(f"cannot read transfer function from {obj!r}")


def parse_plant(obj: dict) -> PlantModel:
    if not isinstance(obj, dict):
        raise ConfigError("'plant' must be an object")
    if "g" in obj:
        return PlantModel.from_output_disturbance(_tf(obj["g"]))
    try:
        return PlantModel(*(_tf(obj[key]) for key in ("p11", "p12", "p21", "p22")))
    except KeyError as exc:
        raise ConfigError(f"plant is missing entry {exc}") from None


def _grid(spec) -> list[float]:
    if isinstance(spec, dict):
        return [float(x) for x in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
    return [float(x) for x in spec]


def _synthesis_kwargs(cfg: dict) -> dict:
    allowed = {"fir_order", "truncation_horizon", "observer_regularization"}
    extra = set(cfg.get("synthesis", {})) - allowed
    if extra:
        raise ConfigError(f"unknown synthesis settings: {sorted(extra)}")
    return dict(cfg.get("synthesis", {}))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def load_config(path: str, seed: int | None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict) or "plant" not in cfg:
        raise ConfigError("config must be an object with a 'plant' entry")
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _metadata(cfg: dict, command: str) -> dict:
    return {"command": command, "config_sha256": config_hash(cfg), "version": __version__,
            "seed": cfg.get("seed", 0)}


# ------------------------------------------------------------------ tables
def read_csv(text: str) -> tuple[dict, list[dict]]:
    """Parse a toolkit CSV: ``# key: value`` metadata lines, then a header row."""
    meta, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("".join(body))))
    return meta, [{k: _cell(v) for k, v in r.items()} for r in rows]


def _cell(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------ commands
def cmd_design(cfg: dict, out: str | None, fmt: str) -> int:
    plant = parse_plant(cfg["plant"])
    d = cfg.get("design", {})
    floor = min_snr_for_stability(plant)
    codes = [(int(c["k"]), int(c["k_prime"]), Family.parse(c.get("family", "independent")), float(c.get("rho", 0.0)))
             for c in d.get("codes", [{"k": 4, "k_prime": 1}, {"k": 4, "k_prime": 2}])]
    grid = _grid(d.get("gamma_db_grid", {"start": 0.0, "stop": 20.0, "num": 201}))
    rows = design_sweep(floor, grid, codes)
    thresholds = {f"{k},{kp},{fam.value}": feasibility_threshold(k, kp, floor, fam, rho) for k, kp, fam, rho in codes}
    result = {"min_snr_for_stability": floor, "thresholds": thresholds}
    status = EXIT_OK
    if "gamma" in d:
        gamma = float(d["gamma"])
        try:
            report = synthesize_filters(plant, SynthesisConfig(gamma, **_synthesis_kwargs(cfg)))
            plan = plan_code(plant, report.filters, gamma, int(d.get("k", 4)), int(d.get("k_prime", 2)),
                             d.get("family", "independent"), float(d.get("rho", 0.0)))
            result["plan"] = plan.to_json()
            result["synthesis"] = report.to_json()
        except InfeasibleDesign as exc:
            print(f"infeasible design: {exc}", file=sys.stderr)
            status = EXIT_INFEASIBLE
    meta = _metadata(cfg, "design")
    if fmt == "json":
        _emit(json.dumps({"metadata": meta, **result, "sweep": rows}, indent=2, sort_keys=True) + "\n", out)
    else:
        _emit(sweep_to_csv(rows, meta), out)
        for key, g in thresholds.items():
            print(f"feasibility threshold ({key}): gamma = {g:.6f} ({10 * math.log10(g) if g > 0 else -math.inf:.2f} dB)",
                  file=sys.stderr)
        if "plan" in result:
            p = result["plan"]
            print("ladder: " + ", ".join(f"{ell}:{snr:.4f}" for ell, snr in p["ladder"].items())
                  + f"; rate/description {p['rate_per_description']:.4f} bits; sum-rate {p['sum_rate']:.4f} bits;"
                  f" efficiency {p['efficiency']:.4f}", file=sys.stderr)
    return status


def cmd_analyze(cfg: dict, out: str | None, fmt: str) -> int:
    plant = parse_plant(cfg["plant"])
    a = cfg.get("analyze", {})
    k, kp = int(a.get("k", 4)), int(a.get("k_prime", 2))
    floor = min_snr_for_stability(plant)
    report = {"min_snr_for_stability": floor, "min_rate_bits": gaussian_rate(floor),
              f"sum_rate_lower_bound_bits({k},{kp})": sum_rate_lower_bound_indep(k, kp, floor),
              f"efficiency_min_sum_rate({k},{kp})": efficiency_min_sum_rate(k, kp, floor)}
    status = EXIT_OK
    gamma = a.get("gamma")
    filters = LoopFilters.from_json(cfg["filters"]) if "filters" in cfg else None
    if filters is None and gamma is not None:
        try:
            filters = synthesize_filters(plant, SynthesisConfig(float(gamma), **_synthesis_kwargs(cfg))).filters
        except InfeasibleDesign as exc:
            print(f"infeasible design: {exc}", file=sys.stderr)
            status = EXIT_INFEASIBLE
    if filters is not None:
        maps = closed_loop_maps(plant, filters)
        if not maps.internally_stable:
            print("closed loop is not internally stable; unstable paths: " + ", ".join(maps.unstable_paths),
                  file=sys.stderr)
            report["unstable_paths"] = ";".join(maps.unstable_paths)
            status = EXIT_INFEASIBLE
        else:
            report["s_minus_one_norm_sq"] = maps.s_minus_one_norm_sq
            report["ly_p21_s_norm_sq"] = maps.ly_p21_s_norm_sq
            report["p12_f_s_norm_sq"] = maps.p12_f_s_norm_sq
            report["nominal_norm_sq"] = maps.nominal_norm_sq
            if gamma is not None and float(gamma) > maps.s_minus_one_norm_sq:
                point = DesignPoint.from_maps(maps, float(gamma))
                report["gamma"] = point.gamma
                report["sigma_q_sq"] = point.sigma_q_sq
                report["sigma_e_sq_predicted"] = performance_sigma_e_sq(point)
    meta = _metadata(cfg, "analyze")
    if fmt == "json":
        _emit(json.dumps({"metadata": meta, **report}, indent=2, sort_keys=True) + "\n", out)
    else:
        buf = io.StringIO()
        for key, value in meta.items():
            buf.write(f"# {key}: {value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for key, value in report.items():
            w.writerow([key, repr(value) if isinstance(value, float) else value])
        _emit(buf.getvalue(), out)
    return status


def _build_schemes(cfg: dict, plant: PlantModel, sim: dict):
    seed = int(cfg.get("seed", 0))
    horizon = int(sim.get("horizon", 1_000_000))
    if horizon < 1:
        raise ConfigError("simulate.horizon must be >= 1")
    common = {}
    for key in ("zero_reception", "mode", "burn_in", "divergence_threshold"):
        if key in sim:
            common[key] = sim[key]
    syn = _synthesis_kwargs(cfg)
    built, failed = {}, {}
    order = []
    for i, s in enumerate(sim.get("schemes", [])):
        fam = Family.parse(s.get("family", "independent"))
        name = s.get("name") or f"scheme{i}"
        if name in order:
            raise ConfigError(f"duplicate scheme name {name!r}")
        order.append(name)
        try:
            if fam is Family.INDEPENDENT:
                sch = independent_scheme(plant, float(s["gamma"]), int(s["k"]), int(s["k_prime"]), seed=seed,
                                         horizon=horizon, synthesis=syn, name=name)
            elif fam is Family.MULTIPLE_DESCRIPTIONS:
                sch = md_scheme(plant, float(s["gamma"]), int(s["k"]), int(s["k_prime"]),
                                int(s.get("nesting_factor", 5)), seed=seed, horizon=horizon, synthesis=syn, name=name)
            else:
                ref_name = s.get("reference")
                if ref_name not in built:
                    raise InfeasibleDesign(f"repetition reference {ref_name!r} is not an earlier, buildable scheme")
                ref = built[ref_name]
                ref = replace(ref, config=replace(ref.config, **common))
                calib = {k: s[k] for k in ("pilot_horizon",) if k in s}
                sch = repetition_scheme(ref, mode=s.get("mode", "rate"), copies=s.get("copies"),
                                        target=s.get("target"), name=name, **calib)
            built[name] = replace(sch, config=replace(sch.config, **common))
        except (StabcodeError, ValueError, KeyError) as exc:
            if isinstance(exc, KeyError):
                raise ConfigError(f"scheme {name!r} is missing {exc}") from None
            k = s.get("copies") or s.get("k")
            if k is None and s.get("reference") in built:
                k = built[s["reference"]].config.code.k
            failed[name] = (fam, dict(s, k=int(k or 0)), f"{type(exc).__name__}: {exc}")
    return order, built, failed


def cmd_simulate(cfg: dict, out: str | None, fmt: str) -> int:
    plant = parse_plant(cfg["plant"])
    sim = cfg.get("simulate")
    if not isinstance(sim, dict):
        raise ConfigError("config needs a 'simulate' section")
    grid = _grid(sim.get("loss_grid", [0.0]))
    if not grid or any(not 0.0 <= p <= 1.0 for p in grid):
        raise ConfigError("loss_grid must be a nonempty list of probabilities")
    order, built, failed = _build_schemes(cfg, plant, sim)
    rows: list[SweepRow] = []
    for name in order:
        if name in built:
            rows.extend(run_sweep([built[name].config], grid))
        else:
            fam, s, msg = failed[name]
            nan = math.nan
            bad = SimMetrics(nan, {}, nan, nan, nan, nan, nan, nan, nan, True, 0, msg)
            rows.extend(SweepRow(name, fam.value, s["k"], int(s.get("k_prime", 1)), p, bad) for p in grid)
            print(f"scheme {name}: {msg}", file=sys.stderr)
    meta = _metadata(cfg, "simulate")
    if fmt == "json":
        payload = {"metadata": meta, "rows": [dict(r.as_csv_row(), error=r.metrics.error) for r in rows]}
        _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", out)
    else:
        _emit(results_to_csv(rows, meta), out)
    _print_gaps(rows, grid)
    if rows and all(r.metrics.diverged for r in rows):
        return EXIT_ALL_FAILED
    return EXIT_OK


def _print_gaps(rows: list[SweepRow], grid):
    by = {(r.scheme, r.loss_prob): r for r in rows}
    reps = sorted({r.scheme for r in rows if r.family == Family.REPETITION.value})
    codes = sorted({r.scheme for r in rows if r.family != Family.REPETITION.value})
    for rep in reps:
        for code in codes:
            cells = []
            for p in grid:
                a, b = by[(code, p)].metrics, by[(rep, p)].metrics
                if a.diverged:
                    cells.append(f"p={p:g}: n/a")
                elif b.diverged:
                    cells.append(f"p={p:g}: +inf dB (baseline failed)")
                else:
                    cells.append(f"p={p:g}: {10 * math.log10(b.sigma_e_sq_hat / a.sigma_e_sq_hat):+.2f} dB")
            print(f"gain of {code} over {rep}: " + "; ".join(cells), file=sys.stderr)


COMMANDS = {"design": cmd_design, "analyze": cmd_analyze, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stabcode", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        return COMMANDS[args.command](cfg, args.out, args.format)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InfeasibleDesign, MarginallyStable) as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
