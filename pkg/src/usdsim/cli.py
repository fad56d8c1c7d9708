"""Command-line front end with machine-readable, byte-deterministic outputs.

Subcommands: povm, probs, simulate, multiplex, sweep.  All read a strict JSON
config file (unknown keys rejected, physical ranges validated at load) and
write their artifacts into the configured output directory; the environment
variable USDSIM_OUTPUT_DIR overrides that directory.

Exit codes: 0 success, 2 config or usage error, 3 numerical guard failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .discrimination import (
    OUTCOME_ORDER,
    NumericalGuardError,
    Outcome,
    ReceiverConfig,
    closed_form_probabilities,
    inconclusive_rate,
    optimality_check,
    outcome_probabilities,
    povm_analytic,
    povm_ancilla,
)
from .montecarlo import RNG_ALGORITHM, RngStream, run_trials, three_sigma_band
from .multiplex import (
    MultiplexConfig,
    balance_check,
    derived_constants,
    quantum_bound,
    round_inconclusive_probability,
    run_protocol,
)

OUTPUT_DIR_ENV = "USDSIM_OUTPUT_DIR"

SWEEP_PARAMS = ("eta", "T", "gamma_mag", "alpha_separation")


class ConfigError(Exception):
    """Invalid configuration file or values."""


# ---------------------------------------------------------------------------
# config loading (strict: unknown keys rejected, ranges validated here)

_SECTION_KEYS = {
    "receiver": {"alpha1", "alpha2", "dim", "eta"},
    "multiplex": {"gamma", "T", "eta", "channel_transmission", "rounds"},
    "rng": {"seed"},
    "output": {"format", "path"},
}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, keys in _SECTION_KEYS.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"config section '{section}' must be an object")
            extra = set(raw[section]) - keys
            if extra:
                raise ConfigError(f"unknown keys in '{section}': {sorted(extra)}")
    # build domain objects for whatever is present so ranges fail at load
    if "receiver" in raw:
        receiver_config(raw)
    if "multiplex" in raw:
        multiplex_config(raw)
    if "rng" in raw:
        rng_stream(raw)
    if "output" in raw:
        fmt = raw["output"].get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError(f"output format must be 'json' or 'csv', got {fmt!r}")
    return raw


def _complex_field(section: dict, key: str, where: str) -> complex:
    try:
        value = section[key]
    except KeyError:
        raise ConfigError(f"missing key '{key}' in '{where}'") from None
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        raise ConfigError(f"'{where}.{key}' must be a [re, im] pair, got {value!r}")
    return complex(float(value[0]), float(value[1]))


def _number_field(section: dict, key: str, where: str):
    try:
        value = section[key]
    except KeyError:
        raise ConfigError(f"missing key '{key}' in '{where}'") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}.{key}' must be a number, got {value!r}")
    return value


def _require(raw: dict, section: str) -> dict:
    if section not in raw:
        raise ConfigError(f"config is missing the '{section}' section")
    return raw[section]


def receiver_config(raw: dict) -> ReceiverConfig:
    sec = _require(raw, "receiver")
    try:
        return ReceiverConfig(
            alpha1=_complex_field(sec, "alpha1", "receiver"),
            alpha2=_complex_field(sec, "alpha2", "receiver"),
            dim=_int_field(sec, "dim", "receiver"),
            eta=float(_number_field(sec, "eta", "receiver")),
        )
    except ValueError as exc:
        raise ConfigError(f"receiver: {exc}") from exc


def _int_field(section: dict, key: str, where: str) -> int:
    value = _number_field(section, key, where)
    if not isinstance(value, int):
        raise ConfigError(f"'{where}.{key}' must be an integer, got {value!r}")
    return value


def multiplex_config(raw: dict, **overrides) -> MultiplexConfig:
    sec = _require(raw, "multiplex")
    seed = rng_stream(raw).seed if "rng" in raw else 0
    channel = sec.get("channel_transmission", 1.0)
    if isinstance(channel, bool) or not isinstance(channel, (int, float)):
        raise ConfigError(
            f"'multiplex.channel_transmission' must be a number, got {channel!r}"
        )
    kwargs = dict(
        gamma=_complex_field(sec, "gamma", "multiplex"),
        splitter_transmission=float(_number_field(sec, "T", "multiplex")),
        eta=float(_number_field(sec, "eta", "multiplex")),
        channel_transmission=float(channel),
        rounds=_int_field(sec, "rounds", "multiplex"),
        seed=seed,
    )
    kwargs.update(overrides)
    try:
        return MultiplexConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"multiplex: {exc}") from exc


def rng_stream(raw: dict) -> RngStream:
    sec = _require(raw, "rng")
    seed = _int_field(sec, "seed", "rng")
    try:
        return RngStream(seed)
    except ValueError as exc:
        raise ConfigError(f"rng: {exc}") from exc


def output_dir(raw: dict) -> Path:
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        path = Path(env)
    else:
        path = Path(raw.get("output", {}).get("path", "out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def record_format(raw: dict) -> str:
    """Serialization of run records: 'json' (default) or flat 'csv' rows.

    Inherently tabular artifacts (the simulate table, sweep grids) are CSV
    regardless of this setting.
    """
    return raw.get("output", {}).get("format", "json")


# ---------------------------------------------------------------------------
# deterministic writers

def _fmt(x: float) -> str:
    """17 significant digits, locale independent, float64 round-trip exact."""
    return format(float(x), ".17g")


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_metadata(command: str, raw: dict, seed: int | None) -> dict:
    return {
        "command": command,
        "config_hash": config_hash(raw),
        "seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "versions": {
            "usdsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _flat_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return _fmt(value)
    if value is None:
        return ""
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(x, (int, float)) for x in value)
    ):
        return f"{_fmt(value[0])} {_fmt(value[1])}"
    return str(value)


def write_record(base: Path, record: dict, fmt: str) -> Path:
    """Write a run record as JSON or as flat name,value,source CSV rows."""
    if fmt == "json":
        path = base.with_suffix(".json")
        write_json(path, record)
        return path
    rows = []
    for key, value in sorted(record["metadata"].items()):
        if isinstance(value, dict):
            for sub, sub_value in sorted(value.items()):
                rows.append([f"metadata.{key}.{sub}", _flat_value(sub_value), ""])
        else:
            rows.append([f"metadata.{key}", _flat_value(value), ""])
    for entry in record.get("results", []):
        rows.append([entry["name"], _flat_value(entry["value"]), entry["source"]])
    for row in record.get("table", []):
        stem = f"{row['sent']}.{row['outcome']}"
        rows.append([f"{stem}.numeric", _fmt(row["numeric"]), row["source"]])
        rows.append([f"{stem}.closed_form", _fmt(row["closed_form"]), row["source"]])
    for label, count in record.get("counts", {}).items():
        rows.append([f"counts.{label}", str(count), "multiplex"])
    path = base.with_suffix(".csv")
    write_csv(path, ["name", "value", "source"], rows)
    return path


def dump_operator(path: Path, dim: int, modes: int, matrix: np.ndarray) -> None:
    """Dense matrix text dump: 'dim m modes k' then row-major 're im' pairs."""
    lines = [f"dim {dim} modes {modes}"]
    for row in matrix:
        pairs = []
        for z in row:
            pairs.append(_fmt(z.real))
            pairs.append(_fmt(z.imag))
        lines.append(" ".join(pairs))
    path.write_text("\n".join(lines) + "\n")


def result(name: str, value, source: str) -> dict:
    return {"name": name, "value": _jsonable(value), "source": source}


# ---------------------------------------------------------------------------
# commands

def cmd_povm(args) -> int:
    raw = load_config(args.config)
    cfg = receiver_config(raw)
    out = output_dir(raw)
    constructions = (
        ("analytic", "ancilla") if args.construction == "both" else (args.construction,)
    )
    built = {}
    results = []
    for tag in constructions:
        povm = povm_analytic(cfg) if tag == "analytic" else povm_ancilla(cfg)
        built[tag] = povm
        results.append(result("completeness_residual", povm.completeness_residual(), tag))
        results.append(result("min_eigenvalue", povm.min_eigenvalue(), tag))
        results.append(result("hermiticity_defect", povm.max_hermiticity_defect(), tag))
    if len(built) == 2:
        discrepancy = max(
            float(np.max(np.abs(built["analytic"][o].matrix - built["ancilla"][o].matrix)))
            for o in OUTCOME_ORDER
        )
        results.append(result("cross_construction_max_discrepancy", discrepancy, "ancilla"))
    if args.dump:
        for tag, povm in built.items():
            for outcome in OUTCOME_ORDER:
                path = out / f"povm_{tag}_{outcome.label}.txt"
                dump_operator(path, cfg.dim, 1, povm[outcome].matrix)
    write_record(
        out / "povm",
        {"metadata": run_metadata("povm", raw, None), "results": results},
        record_format(raw),
    )
    return 0


def cmd_probs(args) -> int:
    raw = load_config(args.config)
    cfg = receiver_config(raw)
    out = output_dir(raw)
    povm = povm_analytic(cfg)
    table = []
    for sent_name, sent in (("alpha1", cfg.alpha1), ("alpha2", cfg.alpha2)):
        numeric = outcome_probabilities(cfg, sent, povm)
        closed = closed_form_probabilities(cfg, sent)
        for outcome in OUTCOME_ORDER:
            table.append(
                {
                    "sent": sent_name,
                    "outcome": outcome.label,
                    "numeric": numeric[outcome],
                    "closed_form": closed[outcome],
                    "source": "analytic",
                }
            )
    report = optimality_check(cfg, povm)
    results = [
        result("numeric_inconclusive", report.numeric_inconclusive, "analytic"),
        result("quantum_bound", report.quantum_bound, "analytic"),
        result("optimality_gap", report.gap, "analytic"),
    ]
    write_record(
        out / "probs",
        {"metadata": run_metadata("probs", raw, None), "results": results, "table": table},
        record_format(raw),
    )
    return 0


_SIMULATE_HEADER = [
    "sent",
    "outcome",
    "trials",
    "count",
    "frequency",
    "expected",
    "band_lo",
    "band_hi",
    "within_band",
    "source",
]


def cmd_simulate(args) -> int:
    if args.trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {args.trials}")
    raw = load_config(args.config)
    cfg = receiver_config(raw)
    rng = rng_stream(raw)
    out = output_dir(raw)
    n = args.trials
    sequence = [1] * n + [2] * n
    tallies = run_trials(cfg, sequence, rng)
    rows = []
    for sent_value, sent_name, sent in ((1, "alpha1", cfg.alpha1), (2, "alpha2", cfg.alpha2)):
        tally = tallies[sent_value]
        closed = closed_form_probabilities(cfg, sent)
        conclusive_freq = tally.frequency(Outcome.CONCLUSIVE_1) + tally.frequency(
            Outcome.CONCLUSIVE_2
        )
        conclusive_expected = closed[Outcome.CONCLUSIVE_1] + closed[Outcome.CONCLUSIVE_2]
        entries = [(o.label, tally.counts[o], tally.frequency(o), closed[o]) for o in OUTCOME_ORDER]
        entries.append(
            (
                "conclusive",
                tally.counts[Outcome.CONCLUSIVE_1] + tally.counts[Outcome.CONCLUSIVE_2],
                conclusive_freq,
                conclusive_expected,
            )
        )
        for label, count, freq, expected in entries:
            lo, hi = three_sigma_band(expected, n)
            rows.append(
                [
                    sent_name,
                    label,
                    str(n),
                    str(count),
                    _fmt(freq),
                    _fmt(expected),
                    _fmt(lo),
                    _fmt(hi),
                    str(lo <= freq <= hi).lower(),
                    "montecarlo",
                ]
            )
    write_csv(out / "simulate.csv", _SIMULATE_HEADER, rows)
    write_record(
        out / "simulate_run",
        {
            "metadata": run_metadata("simulate", raw, rng.seed),
            "results": [result("trials_per_state", n, "montecarlo")],
        },
        record_format(raw),
    )
    return 0


def cmd_multiplex(args) -> int:
    raw = load_config(args.config)
    cfg = multiplex_config(raw)
    out = output_dir(raw)
    derived = derived_constants(cfg)
    report = run_protocol(cfg)
    balance = balance_check(cfg)
    results = [
        result("alice_signal_amp", derived.alice_signal_amp, "multiplex"),
        result("alice_aux_amp", derived.alice_aux_amp, "multiplex"),
        result("tau", derived.tau, "multiplex"),
        result("detector_mean_photons", derived.detector_mean_photons, "multiplex"),
        result("state_overlap", derived.state_overlap, "multiplex"),
        result("balance_imbalance", balance.imbalance, "multiplex"),
        result("round_inconclusive_probability", round_inconclusive_probability(cfg), "multiplex"),
        result("quantum_bound", quantum_bound(cfg), "multiplex"),
        result("rounds", report.rounds, "multiplex"),
        result("sifted_key_rate", report.sifted_key_rate, "multiplex"),
        result("bit_error_rate", report.bit_error_rate, "multiplex"),
        result("inconclusive_rate_empirical", report.inconclusive_rate_empirical, "multiplex"),
        result("anomalous_count", report.anomalous_count, "multiplex"),
        result("sifted_bits", int(report.sifted_positions.size), "multiplex"),
    ]
    counts = {o.label: report.counts[o] for o in OUTCOME_ORDER}
    write_record(
        out / "multiplex",
        {
            "metadata": run_metadata("multiplex", raw, cfg.seed),
            "results": results,
            "counts": counts,
        },
        record_format(raw),
    )
    return 0


_SWEEP_BASE_COLUMNS = {
    "eta": ["eta", "analytic_inconclusive", "analytic_quantum_bound", "analytic_ratio"],
    "T": ["T", "analytic_inconclusive", "analytic_quantum_bound", "analytic_ratio"],
    "gamma_mag": [
        "gamma_mag",
        "analytic_inconclusive",
        "analytic_quantum_bound",
        "analytic_ratio",
    ],
    "alpha_separation": [
        "alpha_separation",
        "analytic_inconclusive",
        "analytic_quantum_bound",
    ],
}


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise ConfigError(f"--steps must be >= 2, got {args.steps}")
    if not args.sweep_from < args.sweep_to:
        raise ConfigError(
            f"--from must be smaller than --to, got {args.sweep_from} >= {args.sweep_to}"
        )
    raw = load_config(args.config)
    out = output_dir(raw)
    grid = np.linspace(args.sweep_from, args.sweep_to, args.steps)
    header = list(_SWEEP_BASE_COLUMNS[args.param])
    mc = args.mc
    if mc is not None:
        if mc < 1:
            raise ConfigError(f"--mc must be >= 1, got {mc}")
        header += ["mc_inconclusive", "mc_conclusive"]

    rows = []
    if args.param == "alpha_separation":
        cfg = receiver_config(raw)
        if mc is not None and np.any(grid == 0.0):
            raise ConfigError("--mc cannot simulate alpha_separation = 0 (identical states)")
        for i, sep in enumerate(grid):
            a1, a2 = -sep / 2.0, sep / 2.0
            row = [
                _fmt(sep),
                _fmt(inconclusive_rate(a1, a2) ** cfg.eta),
                _fmt(inconclusive_rate(a1, a2)),
            ]
            if mc is not None:
                point_cfg = ReceiverConfig(a1, a2, cfg.dim, cfg.eta)
                tallies = run_trials(
                    point_cfg, [1] * mc + [2] * mc, rng_stream(raw).substream(i)
                )
                merged = tallies[1].merge(tallies[2])
                inconclusive = merged.frequency(Outcome.INCONCLUSIVE)
                row += [_fmt(inconclusive), _fmt(1.0 - inconclusive - merged.frequency(Outcome.ANOMALOUS))]
            rows.append(row)
    else:
        base = multiplex_config(raw)
        for i, value in enumerate(grid):
            overrides = {}
            if args.param == "eta":
                overrides["eta"] = float(value)
            elif args.param == "T":
                overrides["splitter_transmission"] = float(value)
            else:
                phase = base.gamma / abs(base.gamma) if abs(base.gamma) else 1.0
                overrides["gamma"] = float(value) * phase
            if mc is not None:
                overrides["rounds"] = mc
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    cfg = multiplex_config(raw, **overrides)
            except ConfigError as exc:
                raise ConfigError(f"sweep value {value!r} for {args.param}: {exc}") from exc
            inconclusive = round_inconclusive_probability(cfg)
            bound = quantum_bound(cfg)
            row = [_fmt(value), _fmt(inconclusive), _fmt(bound), _fmt(inconclusive / bound)]
            if mc is not None:
                report = run_protocol(cfg, rng=RngStream(cfg.seed, stream_id=i))
                row += [_fmt(report.inconclusive_rate_empirical), _fmt(report.sifted_key_rate)]
            rows.append(row)
    write_csv(out / "sweep.csv", header, rows)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usdsim",
        description="Unambiguous two-coherent-state receiver and key-distribution simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("povm", help="build the receiver POVM and report diagnostics")
    p.add_argument("config")
    p.add_argument(
        "--construction",
        choices=("analytic", "ancilla", "both"),
        default="both",
    )
    p.add_argument("--dump", action="store_true", help="dump POVM matrices as text")
    p.set_defaults(func=cmd_povm)

    p = sub.add_parser("probs", help="tabulate outcome probabilities and the optimality gap")
    p.add_argument("config")
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("simulate", help="Monte Carlo outcome tallies with 3-sigma bands")
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=100_000, help="trials per sent state")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("multiplex", help="run the fiber key-distribution protocol")
    p.add_argument("config")
    p.set_defaults(func=cmd_multiplex)

    p = sub.add_parser("sweep", help="grid sweep of one parameter to CSV")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--from", dest="sweep_from", type=float, required=True)
    p.add_argument("--to", dest="sweep_to", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--mc", type=int, default=None, help="add Monte Carlo columns with this many rounds")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors already print to stderr
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalGuardError as exc:
        print(f"numerical guard failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
