"""Command-line front-end: ``simple-resonance <command> --config PATH``."""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import acceptance
from .effective import EffectiveConfig, complete_normal_form, level_set_portrait, pendulum_reduce
from .errors import CertificationFailed, ConfigError, DivisorTooSmall, ResonanceError, SmallnessViolated
from .fixtures import hamiltonian, perpendicular_base, potential, resonant_point, two_harmonic
from .genericity import (
    CartanParams,
    ClassParams,
    GateParams,
    cartan_bad_set,
    constant_tail,
    counterexample_family,
    empirical_measure,
    tau0_function,
    action_dependent_gate,
)
from .lattice import generators_up_to, l1
from .normal_form import AveragingConfig, averaging_at_simple_resonance, averaging_nonresonant
from .resonance import CoveringParams, FrequencyMap, classify_frequencies, measure_estimate_D2, raster, sample_ball, verify_batch
from .serialize import dumps, format_float

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 2, 64
STRICT_ERRORS = (SmallnessViolated, DivisorTooSmall, CertificationFailed)


# Configuration schema


def _floats(text: Any) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text: Any) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _modes(text: Any) -> list[list[int]]:
    if isinstance(text, (list, tuple)):
        return [[int(c) for c in k] for k in text]
    return [[int(c) for c in part.split(",")] for part in str(text).split(";") if part.strip()]


def _bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _mode(text: Any) -> str:
    value = str(text).strip()
    if value not in ("strict", "explore"):
        raise ValueError("mode must be strict or explore")
    return value


SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "system": {
        "n": (int, 2),
        "hamiltonian": (str, "quadratic"),
        "potential": (str, "coupled_pendulum"),
        "center": (_floats, [0.0, 0.8]),
        "cutoff": (int, 0),
    },
    "parameters": {
        "eps": (float, 1e-17),
        "s": (float, 1.0),
        "r": (float, 1.0),
        "delta": (float, 0.5),
        "gamma": (float, 0.95),
        "mu": (float, 0.1),
        "K1": (int, 2),
        "K2": (int, 6),
        "nu": (float, 8.0),
        "L": (float, 1.0),
        "M": (float, 4.0),
        "alpha": (float, 0.0),
    },
    "run": {
        "seed": (int, acceptance.DEFAULT_SEED),
        "mode": (_mode, "strict"),
        "jobs": (int, 1),
        "out": (str, "results"),
    },
    "cover": {
        "lower": (_floats, [-1.0, -1.0]),
        "upper": (_floats, [1.0, 1.0]),
        "steps": (int, 101),
        "samples": (int, 10_000),
        "radius": (float, 1.0),
    },
    "average": {
        "ks": (_modes, []),
        "center_distance": (float, 0.8),
        "nonresonant": (_bool, False),
    },
    "effpot": {
        "ks": (_modes, []),
        "center_distance": (float, 8.0),
        "counterexample": (_bool, False),
        "portrait_rows": (int, 400),
        "portrait_cols": (int, 128),
    },
    "generic": {
        "deltas": (_floats, [0.02, 0.05, 0.1, 0.2, 0.3]),
        "ss": (_floats, [0.5, 1.0]),
        "samples": (int, 2000),
        "cutoff": (int, 8),
        "tail": (str, "zero"),
    },
    "cartan": {
        "mus": (_floats, [0.1, 0.01]),
        "samples": (int, 20_000),
        "cutoff": (int, 8),
    },
    "verify": {
        "criteria": (_ints, list(range(1, 12))),
    },
}


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, Any]]

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        values = {sec: {key: default for key, (_, default) in keys.items()} for sec, keys in SCHEMA.items()}
        for sec, entries in data.items():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}]")
            if not isinstance(entries, dict):
                raise ConfigError(f"section [{sec}] must be a table")
            for key, raw in entries.items():
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
                parse = SCHEMA[sec][key][0]
                try:
                    values[sec][key] = parse(raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from None
        return cls(values)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        if path.suffix == ".json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("the JSON config must be an object of sections")
            return cls.from_mapping(data)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_mapping({sec: dict(parser[sec]) for sec in parser.sections()})

    def to_json(self) -> dict:
        return {sec: dict(entries) for sec, entries in self.values.items()}


# Shared builders


def _system(cfg: ExperimentConfig):
    sysc, par = cfg["system"], cfg["parameters"]
    n = sysc["n"]
    h = hamiltonian(sysc["hamiltonian"], n)
    cutoff = sysc["cutoff"] or par["K2"] + acceptance.EXPLICIT_MARGIN
    f, tail = potential(sysc["potential"], n, par["delta"], par["s"], cutoff, par["r"])
    return n, h, f, tail


def _averaging_config(cfg: ExperimentConfig) -> AveragingConfig:
    p = cfg["parameters"]
    return AveragingConfig(s=p["s"], K1=p["K1"], K2=p["K2"], nu=p["nu"], L=p["L"], r=p["r"])


def _effective_config(cfg: ExperimentConfig) -> EffectiveConfig:
    p = cfg["parameters"]
    return EffectiveConfig(p["gamma"], p["delta"], _averaging_config(cfg))


def _run_pool(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _strict(cfg: ExperimentConfig) -> bool:
    return cfg["run"]["mode"] == "strict"


def _error_entry(k, exc: Exception) -> dict:
    return {"k": None if k is None else list(k), "error": type(exc).__name__, "message": str(exc), "passed": False}


# cover


def cmd_cover(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    n, h, _, _ = _system(cfg)
    par, cov, seed = cfg["parameters"], cfg["cover"], cfg["run"]["seed"]
    omega = FrequencyMap(h.gradient())
    try:
        if par["alpha"] > 0:
            p = CoveringParams(par["alpha"], par["K1"], par["K2"], par["M"], par["L"], nu=par["nu"], epsilon=par["eps"])
        else:
            p = CoveringParams.from_epsilon(par["eps"], par["K1"], par["K2"], par["nu"], par["M"], par["L"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    files = {}
    if n == 2:
        ys, labels = raster(omega, cov["lower"], cov["upper"], cov["steps"], p)
        lines = ["y1,y2,label"] + [f"{format_float(float(a))},{format_float(float(b))},{lab}" for (a, b), lab in zip(ys, labels)]
        files["cover_raster.csv"] = "\n".join(lines) + "\n"
        counts = {lab: int((labels == lab).sum()) for lab in sorted(set(labels.tolist()))}
    else:
        counts = {}
    rng = np.random.default_rng(seed)
    center = cfg["system"]["center"]
    ys = sample_ball(center, cov["radius"], cov["samples"], rng)
    batch = classify_frequencies(omega.evaluate_many(ys), p)
    inside = batch.in_ball
    gaps = int((~batch.covered & inside).sum())
    cert = int((~verify_batch(batch, p) & inside).sum())
    est = measure_estimate_D2(omega, center, cov["radius"], p, max(cov["samples"], 1000), seed + 1)
    report = {
        "covering": p.to_json(),
        "rasterCounts": counts,
        "samples": cov["samples"],
        "insideFrequencyBall": int(inside.sum()),
        "fractions": {
            "D0": float(batch.in_d0[inside].mean()) if inside.any() else 0.0,
            "D1": float(batch.in_d1.any(axis=1)[inside].mean()) if inside.any() else 0.0,
            "D2": float(batch.in_d2[inside].mean()) if inside.any() else 0.0,
        },
        "coveringGaps": gaps,
        "certificateFailures": cert,
        "doubleResonance": est.to_json(),
        "passed": gaps == 0 and cert == 0 and est.per_pair_ok,
    }
    return report, files


# average


def _average_job(args) -> dict:
    cfg_json, k = args
    cfg = ExperimentConfig.from_mapping(cfg_json)
    n, h, f, tail = _system(cfg)
    acfg = _averaging_config(cfg)
    eps = cfg["parameters"]["eps"]
    try:
        center = resonant_point(h, k, perpendicular_base(k, cfg["average"]["center_distance"]))
        radius = acfg.alpha(eps) / (2 * float(np.linalg.norm(k)))
        res = averaging_at_simple_resonance(h, f, eps, k, acfg, center, radius, strict=_strict(cfg), tail=tail)
    except STRICT_ERRORS as exc:
        return _error_entry(k, exc)
    except ValueError as exc:
        return {"k": list(k), "skipped": str(exc), "passed": True}
    out = res.to_json()
    out["center"] = [float(v) for v in center]
    return out


def cmd_average(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    n, h, f, tail = _system(cfg)
    acfg = _averaging_config(cfg)
    eps = cfg["parameters"]["eps"]
    ks = [tuple(k) for k in cfg["average"]["ks"]] or generators_up_to(n, acfg.K1)
    for k in ks:
        if len(k) != n:
            raise ConfigError(f"mode {list(k)} does not have {n} components")
    rows = _run_pool(_average_job, [(cfg.to_json(), k) for k in ks], cfg["run"]["jobs"])
    files = {}
    report = {"hypothesesFailed": acfg.hypotheses(n, eps), "resonant": rows}
    if cfg["average"]["nonresonant"]:
        center = cfg["system"]["center"]
        try:
            nr = averaging_nonresonant(h, f, eps, acfg, center, acfg.alpha(eps) / 2, strict=_strict(cfg), tail=tail)
            report["nonresonant"] = nr.to_json()
            files["average_nonresonant_ledger.csv"] = nr.result.ledger_csv()
        except STRICT_ERRORS as exc:
            report["nonresonant"] = _error_entry(None, exc)
    entries = rows + ([report["nonresonant"]] if "nonresonant" in report else [])
    report["passed"] = all(r.get("passed", False) for r in entries)
    return report, files


# effpot


def _effpot_job(args) -> dict:
    cfg_json, k = args
    cfg = ExperimentConfig.from_mapping(cfg_json)
    n, h, f, tail = _system(cfg)
    ecfg = _effective_config(cfg)
    eps = cfg["parameters"]["eps"]
    kn = float(np.linalg.norm(k))
    try:
        center = resonant_point(h, k, perpendicular_base(k, cfg["effpot"]["center_distance"]))
        ep = complete_normal_form(h, f, eps, k, ecfg, center, ecfg.averaging.alpha(eps) / (2 * kn), strict=_strict(cfg), tail=tail)
    except STRICT_ERRORS as exc:
        return _error_entry(k, exc)
    out = ep.to_json()
    out["center"] = [float(v) for v in center]
    direction = np.asarray(k, dtype=float) / kn
    segment = (center - 0.1 * direction, center + 0.1 * direction)
    model = pendulum_reduce(h, k, segment, amplitude=2 * ep.modulus * eps, phase=ep.phase)
    portrait = level_set_portrait(model, cfg["effpot"]["portrait_rows"], cfg["effpot"]["portrait_cols"])
    out["pendulum"] = model.to_json()
    out["pendulum"]["measuredHalfWidth"] = portrait.measured_half_width()
    out["portraitCsv"] = portrait.csv()
    return out


def cmd_effpot(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    n, h, f, tail = _system(cfg)
    ecfg = _effective_config(cfg)
    tau0 = ecfg.tau0(n)
    requested = [tuple(k) for k in cfg["effpot"]["ks"]] or generators_up_to(n, ecfg.averaging.K1)
    todo, skipped = [], []
    for k in requested:
        if len(k) != n:
            raise ConfigError(f"mode {list(k)} does not have {n} components")
        if l1(k) < tau0:
            skipped.append({"k": list(k), "reason": f"|k|_1 = {l1(k)} below tau0 = {format_float(tau0)}"})
        elif l1(k) > ecfg.averaging.K1:
            skipped.append({"k": list(k), "reason": f"|k|_1 = {l1(k)} above K1 = {ecfg.averaging.K1}"})
        else:
            todo.append(k)
    rows = _run_pool(_effpot_job, [(cfg.to_json(), k) for k in todo], cfg["run"]["jobs"])
    files = {}
    for row in rows:
        csv_text = row.pop("portraitCsv", None)
        if csv_text is not None:
            files["portrait_" + "_".join(str(c) for c in row["k"]) + ".csv"] = csv_text
    report = {"tau0": tau0, "admissible": rows, "skipped": skipped}
    passed = all(r.get("passed", False) for r in rows)
    if cfg["effpot"]["counterexample"]:
        counter = complete_normal_form(h, two_harmonic(n), 1e-6, tuple([1] + [0] * (n - 1)), ecfg, cfg["system"]["center"], 0.1, strict=False)
        report["counterexample"] = {
            "morse": counter.morse.to_json(),
            "expectedFailure": not counter.morse.certified and counter.morse.critical_count == 4,
        }
        passed &= report["counterexample"]["expectedFailure"]
    report["passed"] = passed
    return report, files


# generic and cartan


def cmd_generic(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    g, par, seed = cfg["generic"], cfg["parameters"], cfg["run"]["seed"]
    n = cfg["system"]["n"]
    rows = []
    index = 0
    for delta in g["deltas"]:
        for s in g["ss"]:
            if g["tail"] == "zero":
                tail = constant_tail(0.0)
            elif g["tail"] == "tau0":
                tail = tau0_function(par["gamma"], s, n)
            else:
                raise ConfigError("generic tail must be zero or tau0")
            rep = empirical_measure(ClassParams(s, n, delta, tail, g["cutoff"]), g["samples"], seed + index)
            index += 1
            rows.append({"delta": delta, "s": s, **rep.to_json()})
    gate = action_dependent_gate(
        GateParams(n, par["s"], par["L"], par["nu"], par["K1"], par["K2"], par["delta"], par["gamma"], par["mu"])
    )
    return {"sweep": rows, "gate": gate.to_json(), "passed": all(r["passed"] for r in rows)}, {}


def cmd_cartan(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    c, par, seed = cfg["cartan"], cfg["parameters"], cfg["run"]["seed"]
    n = cfg["system"]["n"]
    family = counterexample_family(n, par["r"], c["cutoff"])
    rows = []
    for i, mu in enumerate(c["mus"]):
        try:
            rep = cartan_bad_set(family, CartanParams(par["r"], mu, tuple([0.0] * n), par["delta"]), c["samples"], seed + i)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows.append({"mu": mu, **rep.to_json()})
    return {"sweep": rows, "passed": all(r["passed"] for r in rows)}, {}


# verify-all


def _run_criteria(numbers, seed: int, jobs: int) -> list:
    out = []
    for number in numbers:
        fn = acceptance.CRITERIA[number]
        kwargs = {"jobs": jobs} if number in acceptance.PARALLEL else {}
        out.append(fn(seed, **kwargs))
    return out


DETERMINISM_PROBE = (2, 3, 8, 9, 10)


def cmd_verify_all(cfg: ExperimentConfig) -> tuple[dict, dict[str, str]]:
    seed, jobs = cfg["run"]["seed"], cfg["run"]["jobs"]
    numbers = cfg["verify"]["criteria"]
    unknown = [c for c in numbers if c not in acceptance.CRITERIA and c != 11]
    if unknown:
        raise ConfigError(f"unknown criteria {unknown}")
    results = _run_criteria([c for c in numbers if c != 11], seed, jobs)
    entries = [r.to_json() for r in results]
    lines = [r.line() for r in results]
    if 11 in numbers:
        start = time.perf_counter()
        first = dumps([r.to_json() for r in _run_criteria(DETERMINISM_PROBE, seed, 1)])
        second = dumps([r.to_json() for r in _run_criteria(DETERMINISM_PROBE, seed, 1)])
        same = first == second
        entries.append({"criterion": 11, "title": "byte-identical reports", "passed": same, "measured": {"probe": list(DETERMINISM_PROBE)}, "notes": []})
        lines.append(f"criterion 11 {'PASS' if same else 'FAIL'} [{time.perf_counter() - start:.1f}s] byte-identical reports")
    report = {"criteria": entries, "passed": all(e["passed"] for e in entries)}
    return report, {"verify_all.txt": "\n".join(lines) + "\n"}


COMMANDS = {
    "cover": cmd_cover,
    "average": cmd_average,
    "effpot": cmd_effpot,
    "generic": cmd_generic,
    "cartan": cmd_cartan,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simple-resonance", description="Resonant normal forms and effective potentials.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI or JSON experiment file")
    parser.add_argument("--out", help="output directory (overrides [run] out)")
    parser.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    parser.add_argument("--mode", choices=("strict", "explore"), help="hypotheses mode (overrides [run] mode)")
    parser.add_argument("--jobs", type=int, help="worker processes for per-k work")
    return parser


def run(command: str, cfg: ExperimentConfig, out_dir: Path) -> int:
    start = time.perf_counter()
    report, files = COMMANDS[command](cfg)
    echoed = cfg.to_json()
    # where results go and how many workers made them do not change them
    echoed["run"] = {k: v for k, v in echoed["run"].items() if k not in ("out", "jobs")}
    report = {"command": command, "config": echoed, **report}
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = command.replace("-", "_")
    (out_dir / f"{stem}.json").write_text(dumps(report) + "\n")
    for name, text in files.items():
        (out_dir / name).write_text(text)
    # timings live apart from the report so the report stays reproducible
    (out_dir / f"{stem}.timing.json").write_text(dumps({"seconds": time.perf_counter() - start}) + "\n")
    if command == "verify-all":
        sys.stdout.write(files["verify_all.txt"])
    print(f"{command}: {'passed' if report['passed'] else 'FAILED'} -> {out_dir / (stem + '.json')}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_mapping({})
        overrides = {"seed": args.seed, "mode": args.mode, "jobs": args.jobs, "out": args.out}
        for key, value in overrides.items():
            if value is not None:
                cfg.values["run"][key] = value
        if cfg["run"]["seed"] < 0 or cfg["run"]["seed"] >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return run(args.command, cfg, Path(cfg["run"]["out"]))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except STRICT_ERRORS as exc:
        print(f"strict failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ResonanceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
