"""Command-line driver: ``cjlab {scan,simulate,fit,wigner,spectral,invert}``.

Each command reads one JSON config (``--config``); ``--set key.sub=value``
and the dedicated flags override it. Precedence: flags > file > defaults.
Reports embed the fully resolved config, so feeding a report back through
``--config`` repeats the run.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.
"""
import argparse
import copy
import csv
import io
import json
import re
import sys
import warnings

import numpy as np

from ._validation import NonConvergenceError
from .detectors import CoincidenceStats, DetectorArray, coincidence_probs
from .distributions import cj_p11, full_output_dist, hom_p11
from .fitting import STAGES, default_cutoff, fit_staged, predict_interference
from .inversion import p1_truncated, pn_solve
from .model import ExperimentModel
from .montecarlo import estimate_cm, sample_pulses, write_record
from . import spectral as sp
from .wigner import output_mixed_state, wigner_slice, write_wigner_binary, write_wigner_csv

__all__ = ["main", "ConfigError"]

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_IO = 0, 2, 3, 4

_MODEL = ExperimentModel().to_dict()

DEFAULTS = {
    "scan": {
        "model": _MODEL,
        "scan": {"parameter": "g", "start": 1.0, "stop": 4.0, "steps": 31},
        "quantities": ["P1", "P1_5det", "P1_6det", "C1", "C2", "C3", "C4", "C5", "C6"],
        "outputs": {"csv": None},
    },
    "simulate": {
        "model": _MODEL,
        "detectors": {"n_detectors": 6, "efficiencies": None, "dead_pulses": None},
        "pulses": 1_000_000,
        "seed": None,
        "chunk_size": 1 << 20,
        "outputs": {"record": None, "report": None},
    },
    "fit": {
        "eta": 0.13,
        "weighted": True,
        "gain_bounds": [1.0, 10.0],
        "sources": {"g1": 1.0, "g2": 1.0, "eta_t1": 1.0, "eta_t2": 1.0, "transmission": 1.0},
        "runs": {"spdc": None, "h_input": None, "v_input": None, "interference": None},
        "M": 6,
        "outputs": {"report": None},
    },
    "wigner": {
        "model": _MODEL,
        "cutoff": None,
        "grid": {"p_range": [-4.0, 4.0], "y_range": [-4.0, 4.0], "points": 201},
        "outputs": {"csv": None, "binary": None, "report": None},
    },
    "spectral": {
        "jsa": {"pump_sigma": 1.0, "pm_length": 2.4, "gvm_slope": 1.0, "grid_size": 256,
                "span_sigmas": 8.0, "pm_shape": "sinc"},
        "filter": None,
        "outputs": {"csv": None, "binary": None, "report": None},
    },
    "invert": {
        "input": None,
        "eta": 0.13,
        "order": 5,
        "output": "p1",
        "outputs": {"report": None},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict) and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _load_json(path, what="config"):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {what} {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_set(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"{'.'.join(parts[:i + 1])}: not an object")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"{key}: unknown field")
    node[parts[-1]] = _parse_value(text)


def resolve_config(command, path=None, sets=(), flags=None):
    cfg = copy.deepcopy(DEFAULTS[command])
    if path:
        doc = _load_json(path)
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]  # a previous report
        cfg = _merge(cfg, doc)
    for s in sets:
        _apply_set(cfg, s)
    for key, val in (flags or {}).items():
        if val is not None:
            _apply_set(cfg, f"{key}={json.dumps(val)}")
    return cfg


def _model(cfg_model, where="model"):
    try:
        return ExperimentModel.from_dict(cfg_model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _dump(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _fmt(v):
    return "%.17g" % v


def _write_csv(header, rows, path):
    buf = io.StringIO(newline="")
    out = csv.writer(buf)
    out.writerow(header)
    for row in rows:
        out.writerow([_fmt(v) for v in row])
    if path is None:
        sys.stdout.write(buf.getvalue())
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _read_stats(path, what):
    doc = _load_json(path, what)
    if isinstance(doc, dict) and "stats" in doc:
        doc = doc["stats"]
    try:
        return CoincidenceStats.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} {path}: {exc}") from None


# -- scan ---------------------------------------------------------------------

def _scan_row(model, T, quantities):
    cache = {}

    def dist():
        if "dist" not in cache:
            cache["dist"] = full_output_dist(model, default_cutoff(model.g))
        return cache["dist"]

    def cms(M):
        if cache.get("M", 0) < M:
            cache["C"] = coincidence_probs(dist(), model.eta, M)
            cache["M"] = M
        return cache["C"]

    row = []
    for q in quantities:
        if q == "hom_p11":
            row.append(hom_p11(T))
        elif q == "cj_p11":
            row.append(cj_p11(model.g))
        elif q.startswith("P") and q.endswith("det"):
            m = int(q[3:-3])
            row.append(p1_truncated(cms(m), model.eta, m).value)
        elif q.startswith("P"):
            row.append(dist()[int(q[1:])])
        elif q.startswith("C"):
            m = int(q[1:])
            row.append(cms(m).probs[m - 1])
    return row


_QUANTITY = re.compile(r"^(hom_p11|cj_p11|P\d+|P1_[1-9]\d*det|C[1-9]\d*)$")


def _check_quantities(quantities):
    for q in quantities:
        if not isinstance(q, str) or not _QUANTITY.match(q):
            raise ConfigError(f"quantities: unknown quantity {q!r}")


def cmd_scan(cfg):
    sc = cfg["scan"]
    param = sc["parameter"]
    model = _model(cfg["model"])
    if param != "T" and param not in cfg["model"]:
        raise ConfigError(f"scan.parameter: unknown parameter {param!r}")
    try:
        steps = int(sc["steps"])
        start, stop = float(sc["start"]), float(sc["stop"])
    except (TypeError, ValueError):
        raise ConfigError("scan: start, stop and steps must be numbers") from None
    if steps < 1:
        raise ConfigError("scan.steps: must be >= 1")
    _check_quantities(cfg["quantities"])
    values = np.linspace(start, stop, steps)
    rows = []
    for v in values:
        if param == "T":
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"scan: T = {v!r} outside [0, 1]")
            m, T = model, float(v)
        else:
            val = int(round(v)) if param == "n_d" else float(v)
            try:
                m = model.replace(**{param: val})
            except ValueError as exc:
                raise ConfigError(f"scan: {param} = {v!r}: {exc}") from None
            T = 0.5
        rows.append([float(v)] + _scan_row(m, T, cfg["quantities"]))
    _write_csv([param] + list(cfg["quantities"]), rows, cfg["outputs"]["csv"])


# -- simulate -------------------------------------------------------------------

def _detectors(cfg, model):
    d = cfg["detectors"]
    dead = model.n_d if d["dead_pulses"] is None else d["dead_pulses"]
    try:
        if d["efficiencies"] is not None:
            return DetectorArray(tuple(d["efficiencies"]), int(dead))
        return DetectorArray.uniform(int(d["n_detectors"]), model.eta, int(dead))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"detectors: {exc}") from None


def cmd_simulate(cfg):
    if cfg["seed"] is None:
        raise ConfigError("seed: required for simulate")
    model = _model(cfg["model"])
    dets = _detectors(cfg, model)
    cfg["detectors"]["efficiencies"] = list(dets.efficiencies)
    cfg["detectors"]["n_detectors"] = dets.n_detectors
    cfg["detectors"]["dead_pulses"] = dets.dead_pulses
    try:
        pulses, seed, chunk = int(cfg["pulses"]), int(cfg["seed"]), int(cfg["chunk_size"])
    except (TypeError, ValueError):
        raise ConfigError("pulses, seed and chunk_size must be integers") from None
    if pulses < 1 or chunk < 1:
        raise ConfigError("pulses and chunk_size must be positive")
    record = sample_pulses(model, dets, pulses, seed, chunk)
    if cfg["outputs"]["record"]:
        try:
            write_record(record, cfg["outputs"]["record"])
        except OSError as exc:
            raise OSError(f"cannot write {cfg['outputs']['record']}: {exc.strerror}") from exc
    stats = estimate_cm(record)
    report = {"config": cfg, "stats": stats.to_dict(), "seed": seed,
              "singles": record.singles().tolist()}
    _dump(report, cfg["outputs"]["report"])


# -- fit ------------------------------------------------------------------------

def cmd_fit(cfg):
    runs = cfg["runs"]
    missing = [s for s in STAGES if not runs.get(s)]
    if missing:
        raise ConfigError(f"runs: missing auxiliary run(s): {', '.join(missing)}")
    bundle = {s: _read_stats(runs[s], f"{s} run") for s in STAGES}
    eta = cfg["eta"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit_staged(bundle, eta, bool(cfg["weighted"]), tuple(cfg["gain_bounds"]))
        src = cfg["sources"]
        model = _model({"g": res["g"].value, "o1": res["o1"].value, "o2": res["o2"].value,
                        "eta": eta, **src}, "sources")
        M = int(cfg["M"])
        dist, pred = predict_interference(model, M)
    flags = sorted({str(w.message) for w in caught})
    report = {
        "config": cfg,
        "fit": {k: r.to_dict() for k, r in res.items()},
        "model": model.to_dict(),
        "predicted": {"C": pred.probs.tolist(), "P": dist.probs[:12].tolist(),
                      "P1": float(dist[1])},
        "flags": flags,
    }
    if runs.get("interference"):
        meas = _read_stats(runs["interference"], "interference run")
        m = {"C": meas.probs.tolist()}
        for order in (5, 6):
            if meas.order >= order:
                est = p1_truncated(meas, eta, order)
                m[f"P1_{order}det"] = est.value
                m[f"P1_{order}det_sigma"] = est.sigma
        report["measured"] = m
    _dump(report, cfg["outputs"]["report"])


# -- wigner ---------------------------------------------------------------------

def cmd_wigner(cfg):
    model = _model(cfg["model"])
    cutoff = cfg["cutoff"]
    state = output_mixed_state(model, None if cutoff is None else int(cutoff))
    cfg["cutoff"] = state.cutoff
    gr = cfg["grid"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid = wigner_slice(state, tuple(gr["p_range"]), tuple(gr["y_range"]), gr["points"])
    out = cfg["outputs"]
    try:
        if out["csv"]:
            write_wigner_csv(grid, out["csv"])
        if out["binary"]:
            write_wigner_binary(grid, out["binary"])
    except OSError as exc:
        raise OSError(f"cannot write Wigner output: {exc}") from exc
    report = {"config": cfg, "min": float(grid.values.min()), "max": float(grid.values.max()),
              "origin": grid.at(0.0, 0.0), "negative_fraction": float(np.mean(grid.values < 0)),
              "max_imag": grid.meta["max_imag"], "top_layer": grid.meta["top_layer"],
              "flags": sorted({str(w.message) for w in caught})}
    _dump(report, out["report"])


# -- spectral -------------------------------------------------------------------

def cmd_spectral(cfg):
    try:
        jsa = sp.build_jsa(**cfg["jsa"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"jsa: {exc}") from None
    before = sp.schmidt_purity(jsa)
    report = {"config": cfg, "purity": before.purity,
              "schmidt_coefficients": before.coefficients[:10].tolist()}
    if cfg["filter"] is not None:
        f = cfg["filter"]
        try:
            jsa = sp.apply_filter(jsa, float(f.get("center", 0.0)), float(f["width"]),
                                  f.get("mode", "both"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"filter: {exc}") from None
        after = sp.schmidt_purity(jsa)
        report.update(filtered_purity=after.purity, transmitted=jsa.transmitted,
                      filtered_schmidt_coefficients=after.coefficients[:10].tolist())
    out = cfg["outputs"]
    try:
        if out["csv"]:
            sp.write_jsa_csv(jsa, out["csv"])
        if out["binary"]:
            sp.write_jsa_binary(jsa, out["binary"])
    except OSError as exc:
        raise OSError(f"cannot write spectrum: {exc}") from exc
    _dump(report, out["report"])


# -- invert ---------------------------------------------------------------------

def cmd_invert(cfg):
    if not cfg["input"]:
        raise ConfigError("input: a coincidence stats file is required")
    stats = _read_stats(cfg["input"], "input")
    order = int(cfg["order"])
    if order > stats.order:
        raise ConfigError(f"order: {order} exceeds the {stats.order} orders in the input")
    report = {"config": cfg}
    if cfg["output"] == "p1":
        est = [p1_truncated(stats, cfg["eta"], m) for m in range(1, order + 1)]
        report["P1"] = [e.value for e in est]
        report["P1_sigma"] = [e.sigma for e in est]
    elif cfg["output"] == "pn":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dist = pn_solve(stats, cfg["eta"], order)
        report["P"] = dist.probs.tolist()
        if "sigma" in dist.meta:
            report["sigma"] = dist.meta["sigma"].tolist()
            report["negative"] = dist.meta["negative"]
        report["flags"] = sorted({str(w.message) for w in caught})
    else:
        raise ConfigError("output: must be 'p1' or 'pn'")
    _dump(report, cfg["outputs"]["report"])


COMMANDS = {"scan": cmd_scan, "simulate": cmd_simulate, "fit": cmd_fit,
            "wigner": cmd_wigner, "spectral": cmd_spectral, "invert": cmd_invert}


def build_parser():
    parser = argparse.ArgumentParser(prog="cjlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config (or a previous report)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. model.g=2.03")
        p.add_argument("--out", help="report or CSV path (default: stdout)")
        if name == "simulate":
            p.add_argument("--seed", type=int)
            p.add_argument("--pulses", type=int)
            p.add_argument("--record", help="binary click-record path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = {}
    if args.out is not None:
        flags["outputs.csv" if args.command == "scan" else "outputs.report"] = args.out
    if args.command == "simulate":
        flags.update({"seed": args.seed, "pulses": args.pulses, "outputs.record": args.record})
    try:
        cfg = resolve_config(args.command, args.config, args.set, flags)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"cjlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"cjlab {args.command}: did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except OSError as exc:
        print(f"cjlab {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, TypeError, ValueError) as exc:
        print(f"cjlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
