"""
Command-line interface.

    loopspam reproduce-paper [--out DIR] [--basis B]
    loopspam run CONFIG [--out DIR] [--seed N] [--basis B] [--mode exact|sampled]
    loopspam calibrate CONFIG [--out DIR] [--seed N] [--basis B]

Every command writes ``report.json`` (or ``calibration.json``) plus one
tab-separated file per matrix into the output directory. Outputs depend
only on the config contents and the seeds in it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import worked_example
from .errors import ConfigError, LoopSpamError, SingularMatrixError, SiftError
from .looptest import (
    EXACT_TOL,
    METHODS,
    LocalizationReport,
    Trial,
    exact_source,
    localize,
    normalized_map,
    sampled_source,
)
from .protocol import (
    PartyConfig,
    RelayConfig,
    calibrate_session_threshold,
    run_session,
    session_loop_test,
    verify_subset,
)
from .qcore import PRESET_KETS, Basis, get_basis
from .scenario import PreparationSet, ShotPlan, derive_seed, device_from_dict, device_to_dict
from .stats import TrialDesign, calibrate_threshold

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4

REPRODUCTION_TOL = 1e-12

PRODUCT_NOTE = (
    "Row 4 of T is recomputed from S1, S2, A1 and A2 as (1, 0, 1, -1). The reference value "
    "(1, 0, 1, 1) quoted with this example is not reproduced by those matrices; both differ "
    "from the identity row (0, 0, 0, 1), so the diagnosis is the same."
)


# -- configuration ------------------------------------------------------------


@dataclass
class ScenarioConfig:
    basis: Basis
    testing_party: str
    alice: dict[str, np.ndarray]
    bob: dict[str, np.ndarray]
    base: tuple[str, ...]
    extras: tuple[str, ...]
    fixed: tuple[str, ...]
    device_spec: dict
    shots: int
    seed: int
    threshold: float | None
    calibration: dict | None
    calibration_file: Path | None
    method: str
    output: str
    protocol: dict | None = None
    raw: dict = field(default_factory=dict)

    @property
    def device(self):
        return device_from_dict(self.device_spec)

    @property
    def tester_pool(self) -> dict[str, np.ndarray]:
        return self.alice if self.testing_party == "alice" else self.bob

    @property
    def fixed_pool(self) -> dict[str, np.ndarray]:
        return self.bob if self.testing_party == "alice" else self.alice


def _require(d: Mapping, key: str, where: str):
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where}: expected an object")
    if key not in d:
        raise ConfigError(f"{where}.{key}: required field is missing")
    return d[key]


def _parse_amplitude(z, where: str) -> complex:
    if isinstance(z, bool):
        raise ConfigError(f"{where}: amplitude must be a number or [re, im]")
    if isinstance(z, (int, float)):
        return complex(z)
    if isinstance(z, list) and len(z) == 2 and all(isinstance(x, (int, float)) for x in z):
        return complex(z[0], z[1])
    raise ConfigError(f"{where}: amplitude must be a number or [re, im], got {z!r}")


def _parse_state(value, where: str) -> np.ndarray:
    if isinstance(value, str):
        if value not in PRESET_KETS:
            raise ConfigError(f"{where}: unknown preset {value!r}; choose from {sorted(PRESET_KETS)}")
        return np.array(PRESET_KETS[value])
    if not isinstance(value, list) or len(value) != 2:
        n = len(value) if isinstance(value, list) else "no"
        raise ConfigError(f"{where}: a state needs exactly 2 amplitudes, got {n}")
    v = np.array([_parse_amplitude(z, f"{where}[{i}]") for i, z in enumerate(value)])
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ConfigError(f"{where}: amplitudes are all zero")
    return v / norm


def _parse_party(d, where: str) -> dict[str, np.ndarray]:
    states = _require(d, "states", where)
    if not isinstance(states, Mapping) or not states:
        raise ConfigError(f"{where}.states: expected a non-empty object of named states")
    return {str(lb): _parse_state(v, f"{where}.states.{lb}") for lb, v in states.items()}


def _labels(value, pool: Mapping, where: str, count: int | None = None) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ConfigError(f"{where}: expected a list of state labels")
    if count is not None and len(value) != count:
        raise ConfigError(f"{where}: expected exactly {count} labels, got {len(value)}")
    unknown = [lb for lb in value if lb not in pool]
    if unknown:
        raise ConfigError(f"{where}: labels {unknown} are not defined in the state pool")
    if len(set(value)) != len(value):
        raise ConfigError(f"{where}: duplicate labels")
    return tuple(value)


def _int(value, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def parse_config(raw: Mapping, base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a config object; every problem names the offending field."""
    if not isinstance(raw, Mapping):
        raise ConfigError("config: expected a JSON object")
    try:
        basis = get_basis(_require(raw, "basis", "config"))
    except ValueError as exc:
        raise ConfigError(f"config.basis: {exc}") from None
    alice = _parse_party(_require(raw, "alice", "config"), "config.alice")
    bob = _parse_party(_require(raw, "bob", "config"), "config.bob")
    party = _require(raw, "testing_party", "config")
    if party not in ("alice", "bob"):
        raise ConfigError("config.testing_party: must be 'alice' or 'bob'")
    tester, fixed_pool = (alice, bob) if party == "alice" else (bob, alice)

    sched = _require(raw, "schedule", "config")
    base = _labels(_require(sched, "base", "config.schedule"), tester, "config.schedule.base", 4)
    extras = _labels(_require(sched, "extras", "config.schedule"), tester, "config.schedule.extras")
    if set(base) & set(extras):
        raise ConfigError("config.schedule.extras: must not repeat base labels")
    if len(base) + len(extras) < 5:
        raise ConfigError("config.schedule.extras: the testing party needs at least 5 states in total")
    fixed = _labels(_require(sched, "fixed", "config.schedule"), fixed_pool, "config.schedule.fixed", 4)

    device_spec = _require(raw, "device", "config")
    try:
        device_from_dict(device_spec)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"config.device: {exc}") from None

    shots_d = _require(raw, "shots", "config")
    shots = _int(_require(shots_d, "shots", "config.shots"), "config.shots.shots")
    seed = _int(_require(shots_d, "seed", "config.shots"), "config.shots.seed")
    if seed >= 2**64:
        raise ConfigError("config.shots.seed: must fit in 64 bits")

    thr = _require(raw, "threshold", "config")
    value = _require(thr, "value", "config.threshold")
    if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0):
        raise ConfigError("config.threshold.value: must be a positive number or null")
    calibration = thr.get("calibration")
    if calibration is not None:
        replicas = _int(calibration.get("replicas", 1000), "config.threshold.calibration.replicas", 100)
        quantile = calibration.get("quantile", 0.99)
        if not isinstance(quantile, (int, float)) or not 0.5 < quantile < 1:
            raise ConfigError("config.threshold.calibration.quantile: must lie in (0.5, 1)")
        cal_seed = _int(calibration.get("seed", seed), "config.threshold.calibration.seed")
        calibration = {"replicas": replicas, "quantile": float(quantile), "seed": cal_seed}
    cal_file = thr.get("file")
    if cal_file is not None:
        cal_file = Path(cal_file)
        if not cal_file.is_absolute() and base_dir is not None:
            cal_file = base_dir / cal_file

    method = _require(raw, "method", "config")
    if method not in METHODS:
        raise ConfigError(f"config.method: must be one of {list(METHODS)}")
    output = _require(raw, "output", "config")
    if not isinstance(output, str):
        raise ConfigError("config.output: expected a directory path")

    protocol = raw.get("protocol")
    if protocol is not None:
        rounds = _int(_require(protocol, "rounds", "config.protocol"), "config.protocol.rounds", 1)
        protocol = {
            "rounds": rounds,
            "alice_seed": _int(protocol.get("alice_seed", derive_seed(seed, 1)), "config.protocol.alice_seed"),
            "bob_seed": _int(protocol.get("bob_seed", derive_seed(seed, 2)), "config.protocol.bob_seed"),
            "relay_seed": _int(protocol.get("relay_seed", derive_seed(seed, 3)), "config.protocol.relay_seed"),
            "verify_fraction": protocol.get("verify_fraction"),
            "verify_seed": _int(protocol.get("verify_seed", derive_seed(seed, 4)), "config.protocol.verify_seed"),
        }
        vf = protocol["verify_fraction"]
        if vf is not None and (not isinstance(vf, (int, float)) or not 0 < vf <= 1):
            raise ConfigError("config.protocol.verify_fraction: must lie in (0, 1] or be null")
        if len(fixed_pool) != 4:
            raise ConfigError("config.protocol: the fixed party's pool must hold exactly its 4 states")

    return ScenarioConfig(basis, party, alice, bob, base, extras, fixed, dict(device_spec), shots, seed,
                          None if value is None else float(value), calibration, cal_file, method, output,
                          protocol, json.loads(json.dumps(raw)))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(raw, path.parent)


def worked_example_config(basis: Basis | str = "negated-y") -> dict:
    """Config for the five-state worked example in exact mode."""
    return {
        "basis": get_basis(basis).name,
        "alice": {"states": {lb: lb for lb in worked_example.TRIAL1_LABELS + worked_example.EXTRA_LABELS}},
        "bob": {"states": {lb: lb for lb in worked_example.BOB_LABELS}},
        "testing_party": "alice",
        "schedule": {"base": list(worked_example.TRIAL1_LABELS), "extras": list(worked_example.EXTRA_LABELS),
                     "fixed": list(worked_example.BOB_LABELS)},
        "device": device_to_dict(worked_example.correlated_device()),
        "shots": {"shots": 0, "seed": 0},
        "threshold": {"value": None},
        "method": "auto",
        "output": "reproduce-out",
    }


def apply_overrides(cfg: ScenarioConfig, seed: int | None = None, basis: str | None = None,
                    mode: str | None = None) -> ScenarioConfig:
    if basis is not None:
        cfg.basis = get_basis(basis)
    if seed is not None:
        cfg.seed = seed
        if cfg.calibration is not None:
            cfg.calibration["seed"] = seed
        if cfg.protocol is not None:
            for k, key in enumerate(("alice_seed", "bob_seed", "relay_seed", "verify_seed"), start=1):
                cfg.protocol[key] = derive_seed(seed, k)
    if mode == "exact":
        cfg.shots = 0
    elif mode == "sampled" and cfg.shots == 0 and cfg.protocol is None:
        raise ConfigError("--mode sampled: config.shots.shots must be positive")
    return cfg


# -- output -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix(path: Path, m) -> None:
    m = np.asarray(m, dtype=float)
    path.write_text("".join("\t".join(_fmt(x) for x in row) + "\n" for row in m), encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    rows = [line.split("\t") for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
    return np.array([[float(x) for x in row] for row in rows])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _design(cfg: ScenarioConfig) -> TrialDesign:
    base = PreparationSet.from_pool(cfg.tester_pool, cfg.base, cfg.basis)
    fixed = PreparationSet.from_pool(cfg.fixed_pool, cfg.fixed, cfg.basis, require_invertible=False)
    return TrialDesign.substitution(base, {lb: cfg.tester_pool[lb] for lb in cfg.extras}, fixed, cfg.testing_party)


def _parties(cfg: ScenarioConfig) -> tuple[PartyConfig, PartyConfig]:
    p = cfg.protocol
    return PartyConfig("alice", cfg.alice, p["alice_seed"]), PartyConfig("bob", cfg.bob, p["bob_seed"])


def calibrate(cfg: ScenarioConfig) -> dict:
    device = cfg.device
    if not device.label_independent:
        raise ConfigError("config.device: calibration needs an honest (label-independent) device")
    spec = cfg.calibration or {"replicas": 1000, "quantile": 0.99, "seed": cfg.seed}
    if cfg.protocol is not None:
        alice, bob = _parties(cfg)
        result = calibrate_session_threshold(
            alice, bob, device, cfg.protocol["rounds"], testing_party=cfg.testing_party, base=cfg.base,
            extras=cfg.extras, fixed_labels=cfg.fixed, replicas=spec["replicas"], quantile=spec["quantile"],
            seed=spec["seed"], method=cfg.method, basis=cfg.basis)
        kind = "session"
    else:
        design = _design(cfg)
        result = calibrate_threshold(device, design, ShotPlan(cfg.shots, spec["seed"]), spec["replicas"],
                                     spec["quantile"], cfg.method)
        kind = "trials"
    out = result.to_dict()
    out.update({"kind": kind, "device": cfg.device_spec, "basis": cfg.basis.name,
                "config_sha256": _config_hash(cfg)})
    return out


def _config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.raw, sort_keys=True).encode("utf-8")).hexdigest()


def _resolve_threshold(cfg: ScenarioConfig) -> tuple[float | None, dict]:
    exact = cfg.shots == 0 and cfg.protocol is None
    if cfg.threshold is not None:
        return cfg.threshold, {"source": "config", "value": cfg.threshold}
    if cfg.calibration_file is not None:
        try:
            cal = json.loads(Path(cfg.calibration_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config.threshold.file: cannot read calibration ({exc})") from None
        return float(cal["threshold"]), {"source": "file", "path": str(cfg.calibration_file), "calibration": cal}
    if exact:
        return None, {"source": "exact-tolerance", "value": EXACT_TOL}
    if cfg.calibration is not None:
        cal = calibrate(dataclasses.replace(cfg, device_spec=_honest_counterpart(cfg.device_spec)))
        return float(cal["threshold"]), {"source": "calibrated", "calibration": cal}
    raise ConfigError("config.threshold: sampled runs need a value, a calibration spec or a calibration file")


def _honest_counterpart(spec: dict) -> dict:
    """Declared honest device for calibration: correlation maps dropped."""
    kind = spec.get("type")
    if kind == "noisy":
        return {"type": "noisy", "p": spec["p"], "inner": _honest_counterpart(spec["inner"])}
    if kind in ("alice-correlated", "bob-correlated"):
        return {"type": "honest", "effect": spec["default"]}
    return spec


def _trial_entry(trial) -> dict:
    return {"labels": list(trial.labels), "A": trial.A.tolist(), "S": trial.S.tolist(),
            "normalized_map": normalized_map(trial).tolist()}


def _localization_trials(cfg: ScenarioConfig, loc: LocalizationReport, source) -> dict:
    """The A, S and (A^T)^{-1} S of every evaluated subset, keyed by joined labels."""
    out = {}
    for o in loc.outcomes:
        if o.report is None:
            continue
        for labels in (o.first, o.second):
            key = "-".join(labels)
            if key not in out:
                preps = PreparationSet.from_pool(cfg.tester_pool, labels, cfg.basis)
                out[key] = _trial_entry(Trial.from_data(preps, source(preps)))
    return out


def run_pipeline(cfg: ScenarioConfig) -> dict:
    """Execute a validated config and return the report document."""
    tau, tau_info = _resolve_threshold(cfg)
    device = cfg.device
    base = PreparationSet.from_pool(cfg.tester_pool, cfg.base, cfg.basis)
    extras = {lb: cfg.tester_pool[lb] for lb in cfg.extras}
    report: dict[str, Any] = {"config": cfg.raw, "basis": cfg.basis.name, "testing_party": cfg.testing_party,
                              "threshold": tau_info, "config_sha256": _config_hash(cfg)}
    session = None
    if cfg.protocol is not None:
        alice, bob = _parties(cfg)
        session = run_session(alice, bob, RelayConfig(device, cfg.protocol["relay_seed"]), cfg.protocol["rounds"])
        tables = session.tables()
        source = tables.source(cfg.fixed, cfg.testing_party)
        _, loc = session_loop_test(session, cfg.testing_party, cfg.base, cfg.extras, tau, method=cfg.method,
                                   fixed_labels=cfg.fixed, basis=cfg.basis)
        report["mode"] = "session"
        report["session"] = {"rounds": session.rounds, "clicks": int(session.outcomes.sum()),
                             "seeds": {k: cfg.protocol[k] for k in ("alice_seed", "bob_seed", "relay_seed")}}
        if cfg.protocol["verify_fraction"] is not None:
            ver = verify_subset(session, cfg.protocol["verify_fraction"], cfg.protocol["verify_seed"])
            d = ver.to_dict()
            d["violations"] = d["violations"][:100]
            d["violation_count"] = len(ver.violations)
            report["verification"] = d
    else:
        fixed = PreparationSet.from_pool(cfg.fixed_pool, cfg.fixed, cfg.basis, require_invertible=False)
        if cfg.shots == 0:
            source = exact_source(fixed, device, cfg.testing_party)
            report["mode"] = "exact"
        else:
            source = sampled_source(fixed, device, ShotPlan(cfg.shots, cfg.seed), cfg.testing_party)
            report["mode"] = "sampled"
        loc = localize(base, extras, None, source, tau=tau, method=cfg.method)
    report["trials"] = _localization_trials(cfg, loc, source)
    report["localization"] = loc.to_dict()
    report["flagged_pairs"] = sum(o.status == "fail" for o in loc.outcomes)
    return {"report": report, "session": session}


def _emit(out_dir: Path, result: dict, extra_matrices: Mapping[str, np.ndarray] = ()) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = result["report"]
    mdir = out_dir / "matrices"
    mdir.mkdir(exist_ok=True)
    for key, entry in report["trials"].items():
        write_matrix(mdir / f"A_{key}.tsv", entry["A"])
        write_matrix(mdir / f"S_{key}.tsv", entry["S"])
        write_matrix(mdir / f"AT_inv_S_{key}.tsv", entry["normalized_map"])
    for n, o in enumerate(report["localization"]["schedule"], start=1):
        rep = o.get("report")
        if rep and rep["product"] is not None:
            write_matrix(mdir / f"T_pair{n}.tsv", rep["product"])
    for name, m in dict(extra_matrices).items():
        write_matrix(mdir / f"{name}.tsv", m)
    if result.get("session") is not None:
        result["session"].save(out_dir / "session.jsonl")
    _write_json(out_dir / "report.json", report)


# -- commands -----------------------------------------------------------------


def cmd_reproduce_paper(out_dir: Path, basis: str = "negated-y") -> int:
    cfg = parse_config(worked_example_config(basis))
    result = run_pipeline(cfg)
    report = result["report"]
    trials = report["trials"]
    key1 = "-".join(worked_example.TRIAL1_LABELS)
    key2 = "-".join(worked_example.TRIAL2_LABELS)
    pair = next(o for o in report["localization"]["schedule"]
                if o["first"] == list(worked_example.TRIAL1_LABELS) and o["second"] == list(worked_example.TRIAL2_LABELS))
    matrices = {
        "S1": trials[key1]["S"], "A1": trials[key1]["A"], "A1T_inv_S1": trials[key1]["normalized_map"],
        "S2": trials[key2]["S"], "A2": trials[key2]["A"], "A2T_inv_S2": trials[key2]["normalized_map"],
        "T": pair["report"]["product"],
    }
    expected = worked_example.expected_matrices(cfg.basis)
    checks = {}
    for name, m in matrices.items():
        err = float(np.max(np.abs(np.asarray(m) - expected[name])))
        checks[name] = {"max_abs_error": err, "ok": err <= REPRODUCTION_TOL}
    flagged = pair["report"]["flagged_rows"]
    implicated = report["localization"]["implicated"]
    checks["flagged_rows"] = {"value": flagged, "ok": tuple(flagged) == worked_example.EXPECTED_FLAGGED_ROWS}
    checks["implicated"] = {"value": implicated, "ok": implicated == [worked_example.CORRELATED_STATE]}
    report["reproduction"] = {
        "matrices": {k: np.asarray(v).tolist() for k, v in matrices.items()},
        "checks": checks,
        "tolerance": REPRODUCTION_TOL,
        "product_row4": {"recomputed": matrices["T"][3],
                         "reference": worked_example.REFERENCE_PRODUCT_ROW4.tolist(),
                         "note": PRODUCT_NOTE},
        "ok": all(c["ok"] for c in checks.values()),
    }
    _emit(out_dir, result, {k: np.asarray(v) for k, v in matrices.items()})
    _print_reproduction(report["reproduction"], flagged, implicated)
    return EXIT_OK if report["reproduction"]["ok"] else EXIT_MISMATCH


def _print_reproduction(rep: dict, flagged, implicated) -> None:
    for name, c in rep["checks"].items():
        status = "ok" if c["ok"] else "MISMATCH"
        detail = f"max |err| = {c['max_abs_error']:.3g}" if "max_abs_error" in c else f"value = {c['value']}"
        print(f"{name:12s} {status:8s} {detail}")
    print(f"flagged rows: {flagged}; implicated: {implicated}")
    print(rep["product_row4"]["note"])


def cmd_run(config_path, out_dir: Path | None = None, seed: int | None = None, basis: str | None = None,
            mode: str | None = None) -> int:
    cfg = apply_overrides(load_config(config_path), seed, basis, mode)
    result = run_pipeline(cfg)
    out = Path(out_dir) if out_dir is not None else Path(cfg.output)
    _emit(out, result)
    loc = result["report"]["localization"]
    print(f"pairs failing: {result['report']['flagged_pairs']}; implicated: {loc['implicated']}; "
          f"undetermined: {loc['undetermined']}")
    if "verification" in result["report"]:
        ver = result["report"]["verification"]
        print(f"subset verification: {'pass' if ver['passed'] else 'FAIL'} "
              f"({ver['violation_count']} violations in {ver['matched']} equal-index rounds)")
    return EXIT_OK


def cmd_calibrate(config_path, out_dir: Path | None = None, seed: int | None = None,
                  basis: str | None = None) -> int:
    cfg = apply_overrides(load_config(config_path), seed, basis)
    cal = calibrate(cfg)
    out = Path(out_dir) if out_dir is not None else Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "calibration.json", cal)
    print(f"threshold {cal['threshold']!r} at quantile {cal['quantile']} over {cal['replicas']} replicas")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopspam", description="Loop SPAM consistency tests for untrusted joint measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("reproduce-paper", help="reproduce the five-state worked example")
    rep.add_argument("--out", type=Path, default=Path("reproduce-out"))
    rep.add_argument("--basis", choices=["negated-y", "standard"], default="negated-y")

    for name, helptext in (("run", "run a scenario config"), ("calibrate", "calibrate a flagging threshold")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config.output)")
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        p.add_argument("--basis", choices=["negated-y", "standard"], default=None)
        if name == "run":
            p.add_argument("--mode", choices=["exact", "sampled"], default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-paper":
            return cmd_reproduce_paper(args.out, args.basis)
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.basis, args.mode)
        return cmd_calibrate(args.config, args.out, args.seed, args.basis)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SiftError as exc:
        print(f"sift error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularMatrixError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LoopSpamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
