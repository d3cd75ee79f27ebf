"""Command line front end.

    denskit --config hydrogen-default --suite all --out run1

writes run1/report.json, run1/tables.csv and run1/plots/*.svg, and exits
nonzero if any check failed.  Reports carry no timestamps and plots use a
pinned hash salt, so rerunning with the same config and seed reproduces the
outputs byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .presets import PRESETS, get_preset
from .suites import SUITES, run_report

_ALLOWED_TOP = {"model", "potential", "eps", "level", "alpha_max", "points",
                "seed", "samples"}
_SAMPLE_KEYS = {"support", "norms", "potential", "qmc"}
_DEFAULT_SAMPLES = {"support": 20000, "norms": 30000, "potential": 2048,
                    "qmc": 16384}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the field path."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_config(source: str) -> dict:
    if source in PRESETS:
        return get_preset(source)
    path = Path(source)
    if not path.exists():
        known = ", ".join(sorted(PRESETS))
        _fail("config", f"{source!r} is neither a preset ({known}) nor a file")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        _fail("config", f"{source}: invalid JSON ({exc})")
    return cfg


def validate_config(cfg) -> dict:
    """Check types and ranges; returns the config with defaults filled in.

    Error messages name the offending field by path, e.g. "model.rates[1]".
    """
    if not isinstance(cfg, dict):
        _fail("config", "expected a JSON object")
    for key in cfg:
        if key not in _ALLOWED_TOP:
            _fail(key, "unknown field")
    model = cfg.get("model")
    if not isinstance(model, dict):
        _fail("model", "required object")
    kind = model.get("kind")
    if kind == "hydrogenic_product":
        rates = model.get("rates")
        if not isinstance(rates, (list, tuple)) or not rates:
            _fail("model.rates", "must be a non-empty list")
        for i, a in enumerate(rates):
            if not _is_number(a) or a <= 0:
                _fail(f"model.rates[{i}]", "must be a positive number")
    elif kind == "correlated_pair":
        if not _is_number(model.get("a", 0.5)) or model.get("a", 0.5) <= 0:
            _fail("model.a", "must be a positive number")
        if not _is_number(model.get("lambda", 0.5)) \
                or model.get("lambda", 0.5) < 0:
            _fail("model.lambda", "must be a non-negative number")
        if model.get("E") is not None and not _is_number(model.get("E")):
            _fail("model.E", "must be a number or null")
    else:
        _fail("model.kind",
              "must be 'hydrogenic_product' or 'correlated_pair'")
    pot = cfg.get("potential", {"kind": "atom", "charge": 1.0})
    if not isinstance(pot, dict):
        _fail("potential", "must be an object")
    if pot.get("kind", "atom") != "atom":
        _fail("potential.kind", "only 'atom' is supported")
    if not _is_number(pot.get("charge", 1.0)) or pot.get("charge", 1.0) <= 0:
        _fail("potential.charge", "must be a positive number")
    for field in ("en_kind", "ee_kind"):
        if pot.get(field, "coulomb") not in ("coulomb", "yukawa", "none"):
            _fail(f"potential.{field}",
                  "must be 'coulomb', 'yukawa' or 'none'")
    if not _is_number(pot.get("screening", 0.0)) or pot.get("screening",
                                                            0.0) < 0:
        _fail("potential.screening", "must be a non-negative number")
    eps = cfg.get("eps")
    if eps is not None and (not _is_number(eps) or eps <= 0):
        _fail("eps", "must be null or a positive number")
    level = cfg.get("level", 2)
    if level not in (1, 2, 3):
        _fail("level", "must be 1, 2 or 3")
    alpha_max = cfg.get("alpha_max", 3)
    if not isinstance(alpha_max, int) or isinstance(alpha_max, bool) \
            or not 0 <= alpha_max <= 12:
        _fail("alpha_max", "must be an integer between 0 and 12")
    points = cfg.get("points", [[1.0, 0.0, 0.0]])
    if not isinstance(points, list) or not points:
        _fail("points", "must be a non-empty list of 3-vectors")
    for i, p in enumerate(points):
        if not isinstance(p, (list, tuple)) or len(p) != 3 \
                or not all(_is_number(v) for v in p):
            _fail(f"points[{i}]", "must be a 3-vector of numbers")
        if sum(v * v for v in p) == 0.0:
            _fail(f"points[{i}]", "must not sit on the nucleus")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail("seed", "must be a non-negative integer")
    samples = dict(_DEFAULT_SAMPLES)
    for key, value in (cfg.get("samples") or {}).items():
        if key not in _SAMPLE_KEYS:
            _fail(f"samples.{key}", "unknown field")
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            _fail(f"samples.{key}", "must be a positive integer")
        samples[key] = value
    return {
        "model": model,
        "potential": pot,
        "eps": eps,
        "level": level,
        "alpha_max": alpha_max,
        "points": [[float(v) for v in p] for p in points],
        "seed": seed,
        "samples": samples,
    }


def write_outputs(report: dict, plots, traces, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    with (out_dir / "tables.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["suite", "check", "status", "value", "target",
                         "detail"])
        for r in report["rows"]:
            writer.writerow([
                r["suite"], r["check"], r["status"],
                "" if r["value"] is None else repr(r["value"]),
                r["target"], r["detail"],
            ])
    if plots:
        plot_dir = out_dir / "plots"
        plot_dir.mkdir(exist_ok=True)
        for name, job in plots:
            job(plot_dir / name)
    if traces is not None:
        (out_dir / "terms.json").write_text(json.dumps(
            {"traces": [t.to_dict() for t in traces]},
            indent=2, sort_keys=True,
        ) + "\n")


def explain_term(terms_path: Path, term_id: str, stream=None) -> int:
    stream = stream or sys.stdout
    terms_path = Path(terms_path)
    if not terms_path.exists():
        print(f"no trace file at {terms_path}; rerun with --trace-terms",
              file=sys.stderr)
        return 2
    data = json.loads(terms_path.read_text())
    for trace in data.get("traces", []):
        terms = {t["id"]: t for t in trace["terms"]}
        if term_id not in terms:
            continue
        term = terms[term_id]
        alpha = tuple(trace["alpha"])
        print(f"term {term_id} of the order-{alpha} expansion "
              f"({trace['n_electrons']} electrons)", file=stream)
        print(f"  multiplicity {term['multiplicity']}", file=stream)
        for entry in term["inner"]:
            cluster = ",".join(str(j) for j in entry["cluster"])
            print(f"  inner derivative: cluster {{{cluster}}} orders "
                  f"{tuple(entry['orders'])}", file=stream)
        for pair, factor in sorted(term["phi"].items()):
            print(f"  cutoff factor {pair}: {factor}", file=stream)
        lines = []
        label = term["label"]
        for step in reversed(trace["steps"]):
            hits = [e for e in step if e["child"] == label]
            if not hits:
                continue
            e = hits[0]
            if e["rule"] == "transfer":
                cluster = ",".join(str(j) for j in e["cluster"])
                what = (f"transfer to cluster {{{cluster}}} along axis "
                        f"{e['axis']} (scale {e['scale']:.6g})")
            else:
                what = (f"cutoff gradient on pair {tuple(e['pair'])} along "
                        f"axis {e['axis']} (sign {e['sign']:+.0f})")
            if len(hits) > 1:
                what += f" [{len(hits)} merged routes; first shown]"
            lines.append(what)
            label = e["parent"]
        print("lineage from the seed term:", file=stream)
        for i, line in enumerate(reversed(lines), start=1):
            print(f"  step {i}: {line}", file=stream)
        return 0
    print(f"term {term_id!r} not found in {terms_path}", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denskit",
        description="density diagnostics for explicit few-electron models",
    )
    parser.add_argument("--config", default="hydrogen-default",
                        help="preset name (%s) or a JSON file"
                             % ", ".join(sorted(PRESETS)))
    parser.add_argument("--suite", default="all",
                        choices=SUITES + ("all",),
                        help="which checks to run")
    parser.add_argument("--out", default="denskit-report",
                        help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--trace-terms", action="store_true",
                        help="also write terms.json with expansion traces")
    parser.add_argument("--explain-term", metavar="TERM_ID",
                        help="print the lineage of a traced term from "
                             "<out>/terms.json and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.explain_term:
        return explain_term(Path(args.out) / "terms.json", args.explain_term)
    try:
        cfg = validate_config(load_config(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    suite_names = SUITES if args.suite == "all" else (args.suite,)
    report, plots, traces = run_report(cfg, suite_names,
                                       trace_terms=args.trace_terms)
    write_outputs(report, plots, traces, Path(args.out))
    for r in report["rows"]:
        value = "" if r["value"] is None else f" value={r['value']:.6g}"
        target = f" target {r['target']}" if r["target"] else ""
        print(f"[{r['status']}] {r['suite']}: {r['check']}{value}{target}")
    n_pass = sum(r["status"] == "pass" for r in report["rows"])
    print(f"{n_pass}/{len(report['rows'])} checks passed; report in "
          f"{args.out}/")
    return 0 if report["all_passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
