"""Command-line experiment runner.

Every subcommand takes an optional JSON config (``--config``); command-line
flags override its keys. Exit codes: 0 pass, 1 failed check, 2 bad config.
"""

import argparse
import copy
import io
import json
import math
import sys
from dataclasses import asdict

import jsonschema

from . import experiments as ex
from . import lowerbound as lb
from . import simulator as sim
from . import verify as vf
from .worstcase import InstanceError

CSV_COLUMNS = ("alg", "n", "d", "h", "tau_s", "tau_w", "seed", "time_to_eps", "grads",
               "coords_s2w", "coords_w2s", "theory_time")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# schemas and defaults

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_PROB = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}


def _list_or(item):
    return {"anyOf": [item, {"type": "array", "items": item, "minItems": 1}]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_ALG = {"enum": sorted(ex.THEORY_FOR)}
_MULT = _obj({"batch_mult": _POS, "step_mult": _POS, "t_mult": _POS, "level": _POS})

SCHEMAS = {
    "verify-function": _obj({
        "configs": {"type": "array", "minItems": 1, "items": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "prefixItems": [_INT1, _INT1, {"type": "number", "exclusiveMinimum": 1, "maximum": math.e}]}},
        "points": _INT1, "hessian_points": _INT1, "kernel_points": _INT1, "fd_tol": _POS,
        "seed": _SEED, "inject_grad_bug": {"type": "boolean"},
    }),
    "verify-oracle": _obj({"draws": _INT1, "variance_points": _INT1, "seed": _SEED}),
    "verify-compressors": _obj({"draws": _INT1, "seed": _SEED}),
    "simulate": _obj({
        "algorithms": {"type": "array", "items": _ALG, "minItems": 1},
        "protocol": {"enum": ["P1", "P2"]},
        "variant": {"enum": ["classic", "new"]},
        "L": _POS, "eps": _POS, "Delta": _POS, "T": _INT1,
        "K": _INT1, "a": {"type": "number", "exclusiveMinimum": 1, "maximum": math.e},
        "sigma2": _list_or(_NONNEG), "n": _list_or(_INT1), "d": _list_or(_INT1),
        "h": _list_or(_NONNEG), "tau_s": _list_or(_NONNEG), "tau_w": _list_or(_NONNEG),
        "seeds": {"type": "array", "items": _SEED, "minItems": 1}, "seed": _SEED,
        "budget_factor": _POS, "multipliers": _MULT, "stop": {"enum": ["eps", "budget"]},
    }),
    "sweep": _obj({
        "points": {"type": "array", "minItems": 1, "items": _obj({
            "n": _INT1, "d": _INT1, "h": _NONNEG, "tau_s": _NONNEG, "tau_w": _NONNEG,
            "sigma2_over_eps": _NONNEG, "T": _INT1, "L": _POS, "eps": _POS,
            "variant": {"enum": ["classic", "new"]}}, required=("n", "d", "h", "tau_s", "tau_w"))},
        "algorithms": {"type": "array", "items": _ALG, "minItems": 1},
        "band": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
        "seed": _SEED,
    }),
    "lowerbound": _obj({
        "bounds": {"type": "array", "items": {"enum": ["lemma6", "lemma8", "chaser"]}, "minItems": 1},
        "trials": {"type": "integer", "minimum": 1000}, "seed": _SEED,
        "lemma6": _obj({"n": _list_or(_INT1), "delta": _list_or(_PROB), "blocks": _INT1,
                        "p_sigma_target": _PROB, "h": _POS, "tau_s": _POS}),
        "lemma8": _obj({"n": _list_or(_INT1), "delta": _list_or(_PROB), "T": _INT1,
                        "p_sigma_target": _PROB, "h": _POS, "tau_w": _POS}),
        "chaser": _obj({"n": _INT1, "runs": _INT1, "blocks": _INT1, "p_sigma_target": _PROB,
                        "level": _POS, "required": _PROB}),
    }),
}

DEFAULTS = {
    "verify-function": {"configs": [list(c) for c in vf.FUNCTION_CONFIGS], "points": 100,
                        "hessian_points": 20, "kernel_points": 10_000, "fd_tol": 1e-5, "seed": 0,
                        "inject_grad_bug": False},
    "verify-oracle": {"draws": 100_000, "variance_points": 1000, "seed": 0},
    "verify-compressors": {"draws": 100_000, "seed": 0},
    "simulate": {"algorithms": ["batch_sync_sgd"], "protocol": "P2", "variant": "classic", "L": 1.0,
                 "eps": 1e-3, "sigma2": 0.0, "n": 1, "d": 8, "h": 1.0, "tau_s": 0.0, "tau_w": 0.0,
                 "seed": 0, "budget_factor": 50.0, "multipliers": {}, "stop": "eps"},
    "sweep": {"algorithms": list(ex.BAND_ALGS), "band": [1 / 20, 20.0], "seed": 0},
    "lowerbound": {"bounds": ["lemma6", "lemma8"], "trials": 10_000, "seed": 0,
                   "lemma6": {"n": 8, "delta": 0.5}, "lemma8": {"n": 4, "delta": 0.5},
                   "chaser": {"n": 8, "runs": 200}},
}

# --trials feeds the natural sample-size key of each command
TRIALS_KEY = {"verify-function": "points", "verify-oracle": "draws", "verify-compressors": "draws",
              "lowerbound": "trials", "simulate": None, "sweep": None}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(command, doc=None, seed=None, trials=None, inject_grad_bug=False):
    """Validate a user document, fill defaults and apply flag overrides."""
    doc = {} if doc is None else doc
    schema = SCHEMAS[command]
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"{command}: {e.message}") from None
    cfg = _merge(DEFAULTS[command], doc)
    if seed is not None:
        cfg["seed"] = seed
        cfg.pop("seeds", None)
    if trials is not None:
        key = TRIALS_KEY[command]
        if key is None:
            raise ConfigError(f"{command} has no trial count")
        cfg[key] = trials
    if inject_grad_bug:
        if command != "verify-function":
            raise ConfigError("--inject-grad-bug only applies to verify-function")
        cfg["inject_grad_bug"] = True
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"{command}: {e.message}") from None
    if command == "simulate" and "Delta" in cfg and "T" in cfg:
        raise ConfigError("simulate: give either Delta or T, not both")
    if command == "simulate" and cfg["variant"] == "classic" and ("K" in cfg or "a" in cfg):
        raise ConfigError("simulate: K and a apply only to the new chain")
    if command == "simulate" and "Delta" not in cfg and "T" not in cfg:
        cfg["T"] = 2
    return cfg


# verification suites


def _suite_report(command, cfg, results):
    return {"command": command, "config": cfg, "passed": vf.all_passed(results),
            "checks": [r.to_dict() for r in results]}


def cmd_verify_function(cfg):
    grad_fn = vf.planted_grad_bug if cfg["inject_grad_bug"] else None
    results = vf.kernel_suite(points=cfg["kernel_points"])
    results += vf.function_suite([tuple(c) for c in cfg["configs"]], points=cfg["points"],
                                 hessian_points=cfg["hessian_points"], seed=cfg["seed"],
                                 grad_fn=grad_fn, fd_tol=cfg["fd_tol"])
    results += vf.classic_suite(seed=cfg["seed"])
    return _suite_report("verify-function", cfg, results)


def cmd_verify_oracle(cfg):
    results = vf.oracle_suite(draws=cfg["draws"], variance_points=cfg["variance_points"], seed=cfg["seed"])
    return _suite_report("verify-oracle", cfg, results)


def cmd_verify_compressors(cfg):
    return _suite_report("verify-compressors", cfg, vf.compressor_suite(draws=cfg["draws"], seed=cfg["seed"]))


# simulation and CSV output


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(cfg, rows):
    """CSV body with a header comment carrying the resolved config and seed."""
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
    buf.write(f"# seed: {cfg.get('seed')}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue()


def read_csv_config(path):
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# config: "):
        raise ConfigError(f"{path} has no config header")
    return json.loads(first[len("# config: "):])


def _axis(v):
    return v if isinstance(v, list) else [v]


def _row(alg, inst, timing, seed, rec, theory):
    return {"alg": alg, "n": inst.n, "d": inst.d, "h": timing.h, "tau_s": timing.tau_s,
            "tau_w": timing.tau_w, "seed": seed, "time_to_eps": rec.time_to_eps,
            "grads": rec.grads_computed, "coords_s2w": rec.coords_s2w, "coords_w2s": rec.coords_w2s,
            "theory_time": theory}


def _simulate_unit(args):
    cfg, alg, n, d, sigma2, h, tau_s, tau_w, seed = args
    inst = ex.make_instance(cfg["L"], cfg["eps"], sigma2, n, d, cfg["variant"],
                            T=cfg.get("T"), Delta=cfg.get("Delta"), K=cfg.get("K"), a=cfg.get("a"))
    timing = sim.TimingModel(h, tau_s, tau_w)
    rec, theory = ex.run_unit(alg, inst, timing, seed, cfg["protocol"], cfg["budget_factor"],
                              cfg["multipliers"], cfg["stop"])
    return _row(alg, inst, timing, seed, rec, theory)


def simulate_rows(cfg):
    """One row per (algorithm, n, d, sigma2, h, tau_s, tau_w, seed), in that nesting order."""
    seeds = cfg.get("seeds", [cfg["seed"]])
    units = [
        (cfg, alg, n, d, s2, h, ts, tw, seed)
        for alg in cfg["algorithms"]
        for n in _axis(cfg["n"]) for d in _axis(cfg["d"]) for s2 in _axis(cfg["sigma2"])
        for h in _axis(cfg["h"]) for ts in _axis(cfg["tau_s"]) for tw in _axis(cfg["tau_w"])
        for seed in seeds
    ]
    return ex.pmap(_simulate_unit, units)


def cmd_simulate(cfg):
    rows = simulate_rows(cfg)
    return {"command": "simulate", "config": cfg, "passed": True, "rows": rows, "csv": csv_text(cfg, rows)}


def cmd_sweep(cfg):
    points = tuple(ex.Point(**p) for p in cfg["points"]) if "points" in cfg else ex.BAND_GRID
    results = ex.band_check(points, cfg["algorithms"], tuple(cfg["band"]), cfg["seed"])
    rows = []
    checks = []
    for res, ok in results:
        inst = res.point.instance()
        rows.append(_row(res.alg, inst, res.point.timing(), res.seed, res.record, res.theory_time))
        checks.append({"alg": res.alg, "point": asdict(res.point), "ratio": res.ratio, "passed": ok})
    return {"command": "sweep", "config": cfg, "passed": all(c["passed"] for c in checks),
            "checks": checks, "rows": rows, "csv": csv_text(cfg, rows)}


# lower-bound checks


def cmd_lowerbound(cfg):
    reports = []
    if "lemma6" in cfg["bounds"]:
        c = cfg["lemma6"]
        extra = {k: c[k] for k in ("blocks", "p_sigma_target", "h", "tau_s") if k in c}
        for n in _axis(c["n"]):
            for delta in _axis(c["delta"]):
                _, params = ex.broadcast_operating_point(n, delta, **extra)
                reports.append(lb.mc_verify("lemma6", params, cfg["trials"], cfg["seed"]).to_dict())
    if "lemma8" in cfg["bounds"]:
        c = cfg["lemma8"]
        extra = {k: c[k] for k in ("T", "p_sigma_target", "h", "tau_w") if k in c}
        for n in _axis(c["n"]):
            for delta in _axis(c["delta"]):
                _, params = ex.upload_operating_point(n, delta, **extra)
                reports.append(lb.mc_verify("lemma8", params, cfg["trials"], cfg["seed"]).to_dict())
    if "chaser" in cfg["bounds"]:
        rep = ex.chaser_experiment(seed=cfg["seed"], **cfg["chaser"]).to_dict()
        rep["bound"] = "chaser"
        rep["pass"] = rep.pop("passed")
        reports.append(rep)
    return {"command": "lowerbound", "config": cfg, "passed": all(r["pass"] for r in reports),
            "reports": reports}


COMMANDS = {
    "verify-function": cmd_verify_function,
    "verify-oracle": cmd_verify_oracle,
    "verify-compressors": cmd_verify_compressors,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "lowerbound": cmd_lowerbound,
}


def _summary(report):
    lines = []
    for c in report.get("checks", []):
        if "name" in c:
            lines.append(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} {c['detail']}")
        else:
            lines.append(f"{'PASS' if c['passed'] else 'FAIL'} {c['alg']} ratio={c['ratio']}")
    for r in report.get("reports", []):
        if r["bound"] == "chaser":
            lines.append(f"{'PASS' if r['pass'] else 'FAIL'} chaser n={r['n']} late={r['fraction_late']:.3f}"
                         f" eps_before_discovery={r['eps_before_discovery']}")
        else:
            lines.append(f"{'PASS' if r['pass'] else 'FAIL'} {r['bound']} n={r['params']['n']}"
                         f" delta={r['params']['delta']} p_hat={r['p_hat']:.4g} ci_high={r['ci_high']:.4g}")
    return "\n".join(lines)


def _plain(o):
    """JSON fallback for numpy scalars and arrays."""
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _output_text(report):
    """What --out receives: CSV for simulations, JSON otherwise."""
    if "csv" in report:
        return report["csv"]
    return json.dumps(report, sort_keys=True, indent=1, default=_plain) + "\n"


def build_parser():
    p = argparse.ArgumentParser(prog="lbopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--trials", type=int, help="override the sample size")
        s.add_argument("--out", help="write CSV (simulate, sweep) or JSON report here")
        s.add_argument("--json", action="store_true", help="print the full JSON report")
        s.add_argument("--check", metavar="PATH",
                       help="rerun the config stored in PATH and compare the output byte for byte")
        if name == "verify-function":
            s.add_argument("--inject-grad-bug", action="store_true",
                           help="use a deliberately wrong gradient (self-test)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        if args.check:
            if command not in ("simulate", "sweep"):
                raise ConfigError("--check applies to simulate and sweep outputs")
            cfg = read_csv_config(args.check)
            jsonschema.validate(cfg, SCHEMAS[command])
        else:
            doc = None
            if args.config:
                with open(args.config) as fh:
                    doc = json.load(fh)
            cfg = resolve_config(command, doc, args.seed, args.trials,
                                 getattr(args, "inject_grad_bug", False))
        report = COMMANDS[command](cfg)
    except (ConfigError, InstanceError, lb.BoundError, OSError, json.JSONDecodeError,
            jsonschema.ValidationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    text = _output_text(report)
    if args.check:
        with open(args.check) as fh:
            same = fh.read() == text
        print(f"{'PASS' if same else 'FAIL'} check {args.check}")
        return EXIT_PASS if same else EXIT_FAIL
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.json:
        print(json.dumps({k: v for k, v in report.items() if k != "csv"}, sort_keys=True, default=_plain))
    elif "csv" in report and not args.out:
        sys.stdout.write(text)
    summary = _summary(report)
    if summary and not args.json:
        print(summary)
    return EXIT_PASS if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
