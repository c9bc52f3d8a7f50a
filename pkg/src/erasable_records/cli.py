"""Command line front end: ``erasable-records <command> --config <path>``.

Exit status: 0 success, 2 valid input with a negative outcome (infeasible,
not certified, purification or Monte Carlo check failed), 1 configuration
error, otherwise the ``exit_code`` of the raised error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema

from . import bounds, junior_senior, purification, sim
from .emit import write_csv, write_json
from .errors import ConfigInvalid, ErasableRecordsError
from .values import CERTIFY_TOL, incentive_gap, policy_value

COMMANDS = ("solve", "scan", "verify", "bounds", "purify", "simulate", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NEGATIVE = 0, 1, 2
OUT_ENV, THREADS_ENV = "ERASABLE_RECORDS_OUT", "ERASABLE_RECORDS_THREADS"


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def load_config(path) -> dict:
    """Parse and schema-validate a config file; raise ConfigInvalid with a location."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalid(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from exc
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigInvalid(f"{path}: field {where}: {e.message}")
    return config


def _require(config, *keys):
    for k in keys:
        if k not in config:
            raise ConfigInvalid(f"field {k}: required for this command")


def _params(config):
    _require(config, "game", "population")
    g, l = config["game"]["g"], config["game"]["l"]
    pop = config["population"]
    return g, l, pop["hat_delta"], pop["bar_delta"]


def _solved(config, out):
    """Solve the junior/senior system or write the infeasibility record."""
    g, l, hd, bd = _params(config)
    eqm = junior_senior.solve(g, l, hd, bd)
    if eqm is None:
        write_json(out / "infeasible.json", {
            "status": "infeasible", "g": g, "l": l, "hat_delta": hd, "bar_delta": bd,
            "existence": junior_senior.existence_check(g, l, hd, bd),
            "upper_endpoint": junior_senior.upper_endpoint(g, l, hd),
        })
    return eqm


def cmd_solve(config, out, tol):
    eqm = _solved(config, out)
    if eqm is None:
        return EXIT_NEGATIVE
    payload = eqm.to_json()
    payload["status"] = "solved"
    payload["residual_tolerance"] = tol
    payload["residuals_within_tolerance"] = all(abs(v) <= tol for v in eqm.residuals.values())
    write_json(out / "equilibrium.json", payload)
    write_csv(out / "margins.csv", ("margin", "value"), sorted(eqm.margins.items()))
    return EXIT_OK


def cmd_scan(config, out, tol):
    _require(config, "game")
    g, l = config["game"]["g"], config["game"]["l"]
    opts = config.get("scan", {})
    hats = opts.get("hat_delta") or [config.get("population", {}).get("hat_delta", 0.99)]
    res = opts.get("resolution", 1e-3)
    rows, intervals = [], []
    for hd in hats:
        for row in junior_senior.scan(g, l, hd, junior_senior.bar_delta_grid(res)):
            rows.append(tuple(row[c] for c in junior_senior.SCAN_COLUMNS))
        iv = junior_senior.feasibility_interval(g, l, hd, res) if g > l else None
        upper = junior_senior.upper_endpoint(g, l, hd)
        nan = float("nan")
        intervals.append((g, l, hd, res, iv is not None, iv[0] if iv else nan, iv[1] if iv else nan,
                          upper if upper is not None else nan))
    write_csv(out / "scan.csv", junior_senior.SCAN_COLUMNS, rows)
    write_csv(out / "intervals.csv", ("g", "l", "hat_delta", "resolution", "nonempty", "lower", "upper",
                                      "closed_form_upper"), intervals)
    return EXIT_OK


def cmd_verify(config, out, tol):
    eqm = _solved(config, out)
    if eqm is None:
        return EXIT_NEGATIVE
    certify = config.get("tolerances", {}).get("certify", CERTIFY_TOL)
    report = junior_senior.verify(eqm, tol=tol, dp_tol=certify)
    env = junior_senior.environment(eqm)
    audit = incentive_gap(env["automaton"], env["profile"], env["mu"], env["monitoring"], env["game"],
                          env["delta"], tol=certify, opponent_states=env["automaton"].states)
    report["max_gap"] = audit.max_gap
    report["certified"] = audit.certified(certify)
    write_json(out / "verify.json", report)
    write_csv(out / "incentive.csv", ("state", "opponent_state", "action_gap"), audit.to_csv_rows())
    return EXIT_OK if report["certified"] else EXIT_NEGATIVE


def cmd_bounds(config, out, tol):
    eqm = _solved(config, out)
    if eqm is None:
        return EXIT_NEGATIVE
    opts = config.get("bounds", {})
    env = junior_senior.environment(eqm)
    game, mon, aut, prof, mu = (env[k] for k in ("game", "monitoring", "automaton", "profile", "mu"))
    consts = bounds.theorem1_constants(game, mon, 0, env["delta"])
    values = policy_value(aut, prof, mu, mon, game, env["delta"])
    reports = bounds.chain_both_forms(aut, prof, mu, mon, game, values, consts, eqm.bar_delta)
    forms = ("max", "min") if opts.get("form", "both") == "both" else (opts["form"],)
    rows = [r for f in forms for r in reports[f].to_csv_rows()]
    worst_case = consts.at_delta(eqm.hat_delta)
    summary = {
        "constants": consts.to_json(),
        "constants_at_hat_delta": worst_case.to_json(),
        "bound_at_hat_delta": bounds.theorem1_upper_bound(worst_case, eqm.bar_delta).__dict__,
        "threshold": bounds.bound_threshold(worst_case, opts.get("target", 0.01)),
        "chain": {f: {"all_hold": reports[f].all_hold(), "failures": [q.id for q in reports[f].failures()],
                      "average_non_dominant": reports[f].average_non_dominant,
                      "bound_vacuous": reports[f].bound.vacuous} for f in forms},
    }
    cert = bounds.theorem4_certificate(aut, mu, prof, game)
    write_json(out / "constants.json", summary)
    write_csv(out / "bands.csv", bounds.CSV_COLUMNS, rows)
    write_json(out / "theorem4.json", cert)
    essential = ("newborn_exit", "average_deviation", "average_deviation_bound")
    ok = cert["rational"] and all(reports[f].all_hold(essential) for f in forms)
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_purify(config, out, tol):
    g, l, hd, bd = _params(config)
    opts = config.get("purify", {})
    eps = opts.get("epsilons", [0.1, 0.05, 0.01])
    starts = opts.get("starts", list(purification.DEFAULT_STARTS))
    if g > l:
        eqm = _solved(config, out)
        if eqm is None:
            return EXIT_NEGATIVE
        reports = [purification.purification_check(eqm, eps)]
    else:
        # no junior/senior equilibrium exists; track forced cooperative candidates
        reports = [purification.purification_check(junior_senior.candidate(g, l, hd, bd, q), eps, start_q=q)
                   for q in starts]
    rows = [r for rep in reports for r in rep.to_csv_rows()]
    write_csv(out / "purification.csv", purification.PURIFY_COLUMNS, rows, purification.REPORT_HEADER)
    summary = {"reports": [rep.summary() for rep in reports], "passed": all(r.passed for r in reports)}
    if g <= l:
        summary["certificate"] = purification.supermodular_certificate(g, l, hd, bd, starts)
    write_json(out / "purification.json", summary)
    return EXIT_OK if summary["passed"] else EXIT_NEGATIVE


def cmd_simulate(config, out, tol, seed):
    eqm = _solved(config, out)
    if eqm is None:
        return EXIT_NEGATIVE
    opts = config.get("simulate", {})
    env = junior_senior.environment(eqm)
    cfg = sim.SimConfig(
        agents=opts.get("agents", 10_000), periods=opts.get("periods", 1000), burn_in=opts.get("burn_in", 200),
        seed=seed, bar_delta=eqm.bar_delta, profile=env["profile"], automaton=env["automaton"],
        monitoring=env["monitoring"], game=env["game"],
    )
    result = sim.run(cfg)
    cmp = sim.compare(result, env["mu"], opts.get("tolerance", 0.01))
    coop_gap = abs(result.cooperation[0] - junior_senior.average_cooperation(eqm))
    summary = result.summary()
    summary.update(seed=seed, comparison=cmp, analytic_cooperation=junior_senior.average_cooperation(eqm),
                   cooperation_deviation=coop_gap)
    summary["passed"] = cmp["passed"] and coop_gap <= cmp["tolerance"]
    if opts.get("trace", True):
        write_csv(out / "trace.csv", sim.TRACE_COLUMNS, result.trace_rows())
    write_json(out / "summary.json", summary)
    return EXIT_OK if summary["passed"] else EXIT_NEGATIVE


SWEEP_KEYS = ("g", "l", "hat_delta", "bar_delta")


def cmd_sweep(config, out, tol, threads=1):
    _require(config, "sweep")
    grid = config["sweep"]
    points = sorted(itertools.product(*(grid[k] for k in SWEEP_KEYS)))

    def one(p):
        row = junior_senior.scan_row(*p)
        return p, tuple(row[c] for c in junior_senior.SCAN_COLUMNS)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = dict(pool.map(one, points))
    # single ordered emitter regardless of completion order
    write_csv(out / "sweep.csv", junior_senior.SCAN_COLUMNS, [results[p] for p in points])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="erasable-records", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to a JSON run configuration")
    p.add_argument("--out", help="output directory (overrides config and environment)")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
    p.add_argument("--tol", type=float, help="residual tolerance (overrides config)")
    return p


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"{THREADS_ENV}={raw!r} is not an integer") from exc
    if n < 1:
        raise ConfigInvalid(f"{THREADS_ENV} must be positive")
    return n


def dispatch(command: str, config: dict, out: Path, seed: int, tol: float) -> int:
    if config.get("command", command) != command:
        raise ConfigInvalid(f"field command: config says {config['command']!r}, invoked as {command!r}")
    if not 0 <= seed < 2**64:
        raise ConfigInvalid("seed must be an unsigned 64-bit integer")
    if not tol > 0:
        raise ConfigInvalid("tolerance must be positive")
    if command == "simulate":
        return cmd_simulate(config, out, tol, seed)
    if command == "sweep":
        return cmd_sweep(config, out, tol, _threads())
    return globals()[f"cmd_{command}"](config, out, tol)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        out = Path(args.out or os.environ.get(OUT_ENV) or config.get("output_dir") or "out")
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        tol = args.tol if args.tol is not None else config.get("tolerances", {}).get(
            "residual", junior_senior.RESIDUAL_TOL)
        return dispatch(args.command, config, out, seed, tol)
    except ErasableRecordsError as exc:
        print(f"erasable-records: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
