"""Command-line entry point: closed-form bound tables, config-driven verification, coalescent runs.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 a hypothesis fails,
3 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import functools
import io
import json
import logging
import os
import sys
from importlib import resources

from . import marks as _marks
from .coalescent import measure_from_config
from .engines import CoalescentEngine, HypothesisError
from .expo import DoleansError
from .mc import (CrossingError, MeanReport, MonteCarloReport, TailEvent, check_martingale_ratio,
                 check_supermartingale, compare_bounds_csv, estimate_tails, reports_to_csv, resolve_workers)
from .models import compound_poisson_model, atom_grid_model
from .pp_core import spec_from_config
from .stoch_int import WeightSpec, _identity

log = logging.getLogger("mppineq")

EXIT_PASS, EXIT_VERDICT, EXIT_HYPOTHESIS, EXIT_USAGE = 0, 1, 2, 3
SCHEMA_VERSION = 1

ENGINE_DEFAULTS = {"n_paths": 100000, "seed": None, "workers": None, "slack": 1.96, "convention": "compensator",
                   "engine": "auto", "horizon": 10.0}
OUTPUT_DEFAULTS = {"format": "json", "path": None}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration ----------------------------------------------------------------------

def bundled_configs() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("mppineq.configs").iterdir() if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    """Read a config from a path, or by bundled name (e.g. ``thm21_compound_poisson``)."""
    if os.path.exists(ref):
        text = open(ref, encoding="utf-8").read()
    else:
        name = ref[:-5] if ref.endswith(".json") else ref
        res = resources.files("mppineq.configs").joinpath(name + ".json")
        if not res.is_file():
            raise ConfigError(f"config {ref!r} is neither a file nor a bundled config ({', '.join(bundled_configs())})")
        text = res.read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{ref}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    for key in ("model",):
        if key not in cfg:
            raise ConfigError(f"{key}: missing section")
    return cfg


def _field(section: dict, key: str, where: str, kind=float, default=...):
    if key not in section:
        if default is ...:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    try:
        return kind(section[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {section[key]!r}") from None


def _scaled(factor, x):
    return factor * x


def weight_from_config(cfg: dict, model: dict) -> WeightSpec:
    kind = cfg.get("kind", "identity")
    floor = cfg.get("jump_floor", model.get("jump_floor"))
    drift = cfg.get("drift_monotone")
    if kind == "identity":
        fn = _identity
    elif kind == "scaled":
        fn = functools.partial(_scaled, _field(cfg, "factor", "weight"))
    else:
        raise ConfigError(f"weight.kind: unknown weight {kind!r}")
    kw = {"jump_floor": None if floor is None else float(floor)}
    if drift is not None:
        kw["drift_monotone"] = drift
    return WeightSpec.of_mark(fn, **kw)


def _drift_class(mean_weight: float) -> str:
    # M drifts at rate -kappa E[W] between jumps.
    if abs(mean_weight) <= 1e-12:
        return "constant"
    return "nonincreasing_between_jumps" if mean_weight > 0 else "nondecreasing_between_jumps"


def _law(cfg, where):
    try:
        return _marks.law_from_config(cfg)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: missing or invalid field {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_model(cfg: dict):
    """``(model, weight)`` where model is a compensator spec or a coalescent engine."""
    m = cfg["model"]
    kind = m.get("kind")
    wcfg = cfg.get("weight", {})
    try:
        if kind == "compound_poisson":
            law = _law(m.get("law"), "model.law")
            spec, w = compound_poisson_model(_field(m, "kappa", "model"), law,
                                             allow_nonzero_mean=bool(m.get("allow_nonzero_mean", False)))
            w2 = weight_from_config(wcfg, m)
            if wcfg.get("drift_monotone") is None:
                w2 = WeightSpec.of_mark(w2.mark_function, jump_floor=w2.jump_floor,
                                        drift_monotone=_drift_class(law.expect(lambda x: float(w2.mark_function(x)))))
            return spec, w2
        if kind == "atom_grid":
            times = m.get("times")
            if not isinstance(times, list) or not times:
                raise ConfigError("model.times: expected a nonempty list")
            masses = m.get("masses", [1.0] * len(times))
            laws = m.get("laws") or [m.get("law")] * len(times)
            laws = [_law(c, f"model.laws[{i}]") for i, c in enumerate(laws)]
            spec, w = atom_grid_model(times, masses, laws)
            w2 = weight_from_config(wcfg, m)
            if wcfg.get("drift_monotone") is None:
                w2 = WeightSpec.of_mark(w2.mark_function, jump_floor=w2.jump_floor, drift_monotone="constant")
            return spec, w2
        if kind == "spec":
            return spec_from_config(m["spec"]), weight_from_config(wcfg, m)
        if kind == "coalescent":
            measure = measure_from_config(m.get("measure", {}))
            n0 = _field(m, "n0", "model", int)
            if n0 < 2:
                raise UsageError("model.n0: need at least 2 blocks")
            v0 = _field(m, "v0", "model")
            t0 = m.get("t0")
            return CoalescentEngine(measure, n0, v0, None if t0 is None else float(t0)), None
    except (ConfigError, UsageError):
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    raise ConfigError(f"model.kind: unknown model {kind!r}")


def resolved_config(cfg: dict, args) -> dict:
    """Config with CLI overrides applied and every default written out."""
    cfg = copy.deepcopy(cfg)
    eng = {**ENGINE_DEFAULTS, **cfg.get("engine", {})}
    out = {**OUTPUT_DEFAULTS, **cfg.get("output", {})}
    if args.seed is not None:
        eng["seed"] = args.seed
    if args.n_paths is not None:
        eng["n_paths"] = args.n_paths
    if args.workers is not None:
        eng["workers"] = args.workers
    eng["workers"] = resolve_workers(eng["workers"])
    if args.format is not None:
        out["format"] = args.format
    if args.out is not None:
        out["path"] = args.out
    if eng["seed"] is None:
        raise UsageError("engine.seed: a seed is mandatory (config or --seed)")
    if not isinstance(eng["n_paths"], int) or eng["n_paths"] < 1:
        raise UsageError(f"engine.n_paths: must be a positive integer, got {eng['n_paths']!r}")
    if out["format"] not in ("json", "csv"):
        raise ConfigError(f"output.format: must be json or csv, got {out['format']!r}")
    cfg["engine"], cfg["output"] = eng, out
    cfg.setdefault("weight", {"kind": "identity"})
    return cfg


def _event(cfg: dict, where: str, horizon: float) -> TailEvent:
    d = dict(cfg)
    d.setdefault("horizon", horizon)
    try:
        return TailEvent.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# -- running ---------------------------------------------------------------------------

def run_checks(cfg: dict, model, w) -> list:
    eng = cfg["engine"]
    checks = cfg.get("checks")
    if not isinstance(checks, list) or not checks:
        raise ConfigError("checks: expected a nonempty list")
    common = dict(workers=eng["workers"], engine=eng["engine"])
    tails, reports = [], []
    for i, chk in enumerate(checks):
        kind = chk.get("type")
        label = chk.get("label", f"check{i}")
        if kind == "tail":
            tails.append((i, label, _event(chk.get("event", {}), f"checks[{i}].event", eng["horizon"]), chk.get("bound")))
        elif kind in ("supermartingale", "martingale_ratio"):
            fn = check_supermartingale if kind == "supermartingale" else check_martingale_ratio
            try:
                rep = fn(model, w, _field(chk, "lam", f"checks[{i}]"), chk.get("family", "gaussian"),
                         _field(chk, "t_probe", f"checks[{i}]", default=1.0), eng["n_paths"], eng["seed"],
                         convention=chk.get("convention", eng["convention"]), label=label, **common)
            except ValueError as exc:
                if isinstance(exc, (HypothesisError, DoleansError)):
                    raise
                raise ConfigError(f"checks[{i}]: {exc}") from None
            reports.append((i, rep))
        else:
            raise ConfigError(f"checks[{i}].type: unknown check {kind!r}")
    if tails:
        for _, label, ev, bound in tails:
            need = _needed_hypothesis(bound or ev.default_bound)
            _check_tail_hypothesis(model, w, need, ev.horizon, eng)
        try:
            out = estimate_tails(model, w, [t[2] for t in tails], eng["n_paths"], eng["seed"],
                                 bounds=[t[3] for t in tails], slack=eng["slack"], labels=[t[1] for t in tails],
                                 **common)
        except CrossingError:
            raise
        except ValueError as exc:
            if isinstance(exc, HypothesisError):
                raise
            raise ConfigError(f"checks: {exc}") from None
        reports.extend((t[0], r) for t, r in zip(tails, out))
    return [r for _, r in sorted(reports, key=lambda p: p[0])]


def _needed_hypothesis(bound: str) -> str:
    from .mc import BOUND_HYPOTHESIS
    if bound not in BOUND_HYPOTHESIS:
        raise ConfigError(f"bound: unknown bound {bound!r}")
    return BOUND_HYPOTHESIS[bound]


def _check_tail_hypothesis(model, w, need, horizon, eng):
    from .mc import check_hypotheses, resolve_engine
    check_hypotheses(resolve_engine(model, w, eng["engine"]), need, horizon, seed=eng["seed"],
                     convention=eng["convention"])


def _report_dict(rep) -> dict:
    d = rep.to_dict()
    d.pop("wall_time", None)
    d["type"] = "tail" if isinstance(rep, MonteCarloReport) else rep.kind
    return d


def render(cfg: dict, reports, extra: dict | None = None) -> str:
    if cfg["output"]["format"] == "csv":
        return reports_to_csv(reports)
    doc = {"config": cfg, "passed": all(r.verdict for r in reports), "results": [_report_dict(r) for r in reports]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    xs, v2s = args.x, args.v2
    if any(not x > 0 for x in xs):
        raise UsageError("--x values must be positive")
    if any(not v > 0 for v in v2s):
        raise UsageError("--v2 values must be positive")
    if args.c < 0 or not args.beta > 0:
        raise UsageError("need --c >= 0 and --beta > 0")
    text = compare_bounds_csv(xs, v2s, c=args.c, alpha=args.alpha, beta=args.beta, a=args.a, b=args.b)
    if args.format == "json":
        rows = list(csv.DictReader(io.StringIO(text)))
        text = json.dumps([{**r, "x": float(r["x"]), "v2": float(r["v2"]), "value": float(r["value"])} for r in rows],
                          indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_PASS


def cmd_verify(args) -> int:
    cfg = resolved_config(load_config(args.config), args)
    model, w = build_model(cfg)
    reports = run_checks(cfg, model, w)
    for r in reports:
        log.info("%s: %s", r.label, "pass" if r.verdict else "FAIL")
    _emit(render(cfg, reports), cfg["output"]["path"])
    return EXIT_PASS if all(r.verdict for r in reports) else EXIT_VERDICT


def cmd_coalescent(args) -> int:
    cfg = resolved_config(load_config(args.config), args)
    if cfg["model"].get("kind") != "coalescent":
        raise ConfigError("model.kind: the coalescent command needs a coalescent model")
    engine, _ = build_model(cfg)
    reports = run_checks(cfg, engine, None)
    nonneg = _check_nonnegative_jumps(engine, cfg)
    extra = {"min_jump": nonneg, "t0": engine.t0}
    if args.trajectory:
        _write_trajectory(engine, cfg, args.trajectory)
    _emit(render(cfg, reports, extra), cfg["output"]["path"])
    ok = all(r.verdict for r in reports)
    return EXIT_PASS if ok else EXIT_VERDICT


def _check_nonnegative_jumps(engine, cfg) -> float:
    from .mc import run_blocks
    horizon = max([c.get("event", {}).get("horizon", cfg["engine"]["horizon"]) for c in cfg["checks"]])
    res = run_blocks(engine, cfg["engine"]["n_paths"], cfg["engine"]["seed"], horizon, "tail",
                     ((TailEvent("B1", 0.0, 1.0, horizon),),), cfg["engine"]["workers"])
    low = min(r[1] for r in res)
    if low < 0:
        raise HypothesisError(f"coalescent martingale has a negative jump {low}")
    return float(low) if low != float("inf") else None


def _write_trajectory(engine, cfg, path):
    from .coalescent import CoalescentState, coalescent_martingale
    horizon = cfg["engine"]["horizon"]
    batch = engine.sample(cfg["engine"]["seed"], 0, 1, horizon)
    c = int(batch.count[0])
    state = CoalescentState(engine.n0, engine.t0, engine.t0 + horizon,
                            tuple(zip(batch.times[0, :c].tolist(), batch.extra["ks"][0, :c].tolist())))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(coalescent_martingale(state, engine.curve(horizon)).to_csv())


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mppineq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="tabulate every closed-form bound on an (x, v2) grid")
    b.add_argument("--x", type=_float_list, required=True, help="comma-separated x values")
    b.add_argument("--v2", type=_float_list, required=True, help="comma-separated v^2 values")
    b.add_argument("--c", type=float, default=1.0, help="jump bound for Freedman")
    b.add_argument("--alpha", type=float, default=0.0)
    b.add_argument("--beta", type=float, default=1.0)
    b.add_argument("--a", type=float, default=0.0, help="self-normalised bound parameter a")
    b.add_argument("--b", type=float, default=1.0, help="self-normalised bound parameter b")
    b.add_argument("--out")
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.set_defaults(func=cmd_bounds)

    for name, func, hlp in (("verify", cmd_verify, "run the Monte Carlo checks listed in a config"),
                            ("coalescent", cmd_coalescent, "certify the coalescent tail inequalities")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True, help="config path or bundled config name")
        s.add_argument("--seed", type=int)
        s.add_argument("--n-paths", type=int)
        s.add_argument("--workers", type=int, help="worker processes (default $PENA_MPP_WORKERS or 1)")
        s.add_argument("--out")
        s.add_argument("--format", choices=("csv", "json"))
        if name == "coalescent":
            s.add_argument("--trajectory", help="write one sample trajectory as CSV")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except HypothesisError as exc:
        print(f"hypothesis check failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConfigError, UsageError, CrossingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
