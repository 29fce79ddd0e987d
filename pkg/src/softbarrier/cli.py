"""Command-line entry point.

Two subcommands:

    softbarrier run <config.toml> [--output PATH] [--format csv|ndjson] [--seed N]
    softbarrier check <scenario> <suite> [--samples K] [--seed N] [--output PATH]

`run` loads a TOML run description (scenario, filter and simulation settings,
report assertions), executes the closed loop, writes the trace in CSV or
NDJSON, and prints a JSON report embedding the fully resolved configuration.
Exit codes: 0 all assertions pass, 1 an assertion failed, 2 the config could
not be parsed or validated, 3 the simulation aborted on a non-finite state.

`check` runs one of the sampled invariant suites against a named scenario and
exits 0 iff every check passes.
"""

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .checks import SUITES, run_suite
from .filter import default_config
from .model import build_pendulum_scenario, build_unicycle_scenario
from .sim import SimConfig, metrics, resolve_eps, simulate

__all__ = ["main", "load_run_config", "ConfigError"]

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3


class ConfigError(Exception):
    """Raised for any config parse or validation failure (exit code 2)."""


_SCENARIOS = {
    "pendulum": lambda goal: build_pendulum_scenario("wide"),
    "pendulum_narrow": lambda goal: build_pendulum_scenario("narrow"),
    "pendulum_multi": lambda goal: build_pendulum_scenario("multi"),
    "unicycle": lambda goal: build_unicycle_scenario(
        goal=(2.0, 4.5) if goal is None else tuple(goal)
    ),
}

_SECTION_KEYS = {
    "scenario": {"name", "goal"},
    "filter": {
        "rho1", "rho2", "alpha", "eps", "kappa_h", "kappa_beta",
        "n_samples", "ts", "substeps", "sigma_kind", "eps_floor_mode",
        "l_s", "l_phi",
    },
    "sim": {
        "x0", "duration", "delta_t", "law", "plant_substeps",
        "backup_index", "seed",
    },
    "output": {"path", "format"},
    "report": {
        "assert_safe", "expect_safety_violation", "assert_admissible",
        "assert_beta_positive", "goal_tolerance",
    },
}

_REPORT_DEFAULTS = {
    "assert_safe": False,
    "expect_safety_violation": False,
    "assert_admissible": True,
    "assert_beta_positive": False,
    "goal_tolerance": None,
}


def _reject_unknown(section, given):
    allowed = _SECTION_KEYS[section]
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(unknown)}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def load_run_config(path):
    """Parse and validate a run config; returns the raw section dicts."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    unknown = sorted(set(raw) - set(_SECTION_KEYS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    if "scenario" not in raw or "name" not in raw["scenario"]:
        raise ConfigError("config must have a [scenario] section with a name")
    for section, content in raw.items():
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        _reject_unknown(section, content)
    name = raw["scenario"]["name"]
    if name not in _SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; choose from {sorted(_SCENARIOS)}"
        )
    if "goal" in raw["scenario"] and name != "unicycle":
        raise ConfigError("goal is only valid for the unicycle scenario")
    return raw


def _build_run(raw, cli_seed=None):
    """Resolve the raw config into (scenario, filter_cfg, sim_cfg, out, report)."""
    scen_sec = raw["scenario"]
    scenario = _SCENARIOS[scen_sec["name"]](scen_sec.get("goal"))

    sim_defaults = dict(scenario.meta.get("sim", {}))
    sim_sec = {**sim_defaults, **raw.get("sim", {})}
    if cli_seed is not None:
        sim_sec["seed"] = cli_seed
    try:
        sim_cfg = SimConfig(
            x0=sim_sec["x0"],
            duration=float(sim_sec["duration"]),
            delta_t=float(sim_sec["delta_t"]),
            law=sim_sec.get("law", "single"),
            plant_substeps=int(sim_sec.get("plant_substeps", 5)),
            backup_index=int(sim_sec.get("backup_index", 0)),
            seed=int(sim_sec.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad [sim] section: {exc}") from exc

    filter_cfg = None
    if sim_cfg.law in ("single", "multi"):
        try:
            filter_cfg = default_config(scenario, **raw.get("filter", {}))
            filter_cfg = resolve_eps(scenario, filter_cfg, seed=sim_cfg.seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad [filter] section: {exc}") from exc
        if sim_cfg.law == "multi" and scenario.nu > 1 \
                and filter_cfg.rho2 is None:
            raise ConfigError("multi law needs rho2 in [filter]")

    out_sec = raw.get("output", {})
    fmt = out_sec.get("format", "csv")
    if fmt not in ("csv", "ndjson"):
        raise ConfigError(f"unknown output format {fmt!r}")
    output = {"path": out_sec.get("path"), "format": fmt}
    report = {**_REPORT_DEFAULTS, **raw.get("report", {})}
    return scenario, filter_cfg, sim_cfg, output, report


def _resolved_config(scenario, scen_sec, filter_cfg, sim_cfg, output, report):
    echo = {
        "scenario": {"name": scen_sec["name"]},
        "sim": {
            "x0": [float(v) for v in sim_cfg.x0],
            "duration": sim_cfg.duration,
            "delta_t": sim_cfg.delta_t,
            "law": sim_cfg.law,
            "plant_substeps": sim_cfg.plant_substeps,
            "backup_index": sim_cfg.backup_index,
            "seed": sim_cfg.seed,
        },
        "output": output,
        "report": report,
    }
    if scen_sec["name"] == "unicycle":
        echo["scenario"]["goal"] = [float(v) for v in scenario.meta["goal"]]
    if filter_cfg is not None:
        echo["filter"] = {
            "rho1": filter_cfg.rho1,
            "rho2": filter_cfg.rho2,
            "alpha": filter_cfg.alpha,
            "eps": filter_cfg.eps,
            "kappa_h": filter_cfg.kappa_h,
            "kappa_beta": filter_cfg.kappa_beta,
            "n_samples": filter_cfg.grid.n_samples,
            "ts": filter_cfg.grid.ts,
            "substeps": filter_cfg.grid.substeps,
            "sigma_kind": filter_cfg.sigma_kind,
            "eps_floor_mode": filter_cfg.eps_floor_mode,
        }
    return echo


def trace_records(trace, law):
    """Per-control-step dicts shared by both writers."""
    for k in range(trace.n_steps):
        rec = {
            "t": float(trace.t[k]),
            "x": [float(v) for v in trace.x[k]],
            "u": [float(v) for v in trace.u[k]],
        }
        if trace.diagnostics:
            d = trace.diagnostics[k]
            rec.update(
                h=float(d.h), hbar=float(d.h_bar), beta=float(d.beta),
                gamma=float(d.gamma), sigma=float(d.sigma), q=int(d.q),
                branch=d.branch,
            )
        else:
            rec.update(h=None, hbar=None, beta=None, gamma=None, sigma=None,
                       q=None, branch=law)
        yield rec


def _write_trace(path, trace, law, fmt):
    records = list(trace_records(trace, law))
    n = len(records[0]["x"]) if records else 0
    m = len(records[0]["u"]) if records else 0
    with open(path, "w") as fh:
        if fmt == "ndjson":
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
            return
        cols = (
            ["t"]
            + [f"x{i + 1}" for i in range(n)]
            + [f"u{i + 1}" for i in range(m)]
            + ["h", "hbar", "beta", "gamma", "sigma", "q", "branch"]
        )
        fh.write(",".join(cols) + "\n")
        for rec in records:
            cells = [repr(rec["t"])]
            cells += [repr(v) for v in rec["x"]]
            cells += [repr(v) for v in rec["u"]]
            for key in ("h", "hbar", "beta", "gamma", "sigma"):
                cells.append("" if rec[key] is None else repr(rec[key]))
            cells.append("" if rec["q"] is None else str(rec["q"]))
            cells.append(rec["branch"])
            fh.write(",".join(cells) + "\n")


def _evaluate_assertions(report, summary, scenario):
    results = []

    def add(name, enabled, passed, detail):
        if enabled:
            results.append({"name": name, "passed": bool(passed),
                            "detail": detail})

    add("safe", report["assert_safe"], summary["min_hs"] >= 0.0,
        f"min h_s = {summary['min_hs']:.6g}")
    add("safety_violation_expected", report["expect_safety_violation"],
        summary["min_hs"] < 0.0, f"min h_s = {summary['min_hs']:.6g}")
    add("beta_positive", report["assert_beta_positive"],
        summary.get("min_beta", float("-inf")) > 0.0,
        f"min beta = {summary.get('min_beta')}")
    if report["goal_tolerance"] is not None:
        dist = summary.get("goal_distance")
        add("goal_reached", True,
            dist is not None and dist <= float(report["goal_tolerance"]),
            f"goal distance = {dist}")
    return results


def _admissibility_worst(trace, scenario):
    A_u, b_u = scenario.control_set.A, scenario.control_set.b
    worst = float("-inf")
    for u in trace.u:
        worst = max(worst, float(max(A_u @ u - b_u)))
    return worst


def _cmd_run(args):
    try:
        raw = load_run_config(args.config)
        if args.output is not None:
            raw.setdefault("output", {})["path"] = args.output
        if args.format is not None:
            raw.setdefault("output", {})["format"] = args.format
        scenario, filter_cfg, sim_cfg, output, report = _build_run(
            raw, cli_seed=args.seed
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    trace = simulate(scenario, sim_cfg, filter_cfg)
    summary = metrics(trace, scenario)
    if report["assert_admissible"]:
        worst = _admissibility_worst(trace, scenario)
        summary["max_constraint_violation"] = worst

    if output["path"] is not None:
        _write_trace(output["path"], trace, sim_cfg.law, output["format"])

    assertions = _evaluate_assertions(report, summary, scenario)
    if report["assert_admissible"]:
        worst = summary["max_constraint_violation"]
        assertions.append({
            "name": "admissible",
            "passed": worst <= 1e-9,
            "detail": f"max A_u u - b_u = {worst:.6g}",
        })
    doc = {
        "config": _resolved_config(
            scenario, raw["scenario"], filter_cfg, sim_cfg, output, report
        ),
        "metrics": summary,
        "flags": {
            "SAFETY_VIOLATED": summary["min_hs"] < 0.0,
            "ABORTED": trace.aborted,
        },
        "events": trace.events,
        "assertions": assertions,
        "passed": all(a["passed"] for a in assertions),
    }
    print(json.dumps(doc, indent=2))
    if trace.aborted:
        return EXIT_ABORT
    return EXIT_OK if doc["passed"] else EXIT_ASSERTION


def _cmd_check(args):
    scenario = _SCENARIOS[args.scenario](None)
    doc = run_suite(scenario, args.suite, samples=args.samples, seed=args.seed)
    text = json.dumps(doc, indent=2)
    print(text)
    if args.output is not None:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK if doc["passed"] else EXIT_ASSERTION


def build_parser():
    parser = argparse.ArgumentParser(
        prog="softbarrier",
        description="Safety-filtered control runs and invariant suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a run described by a TOML config")
    p_run.add_argument("config", help="path to the run config")
    p_run.add_argument("--output", help="trace output path (overrides config)")
    p_run.add_argument("--format", choices=("csv", "ndjson"),
                       help="trace format (overrides config)")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="run a sampled invariant suite")
    p_check.add_argument("scenario", choices=sorted(_SCENARIOS))
    p_check.add_argument("suite", choices=sorted(SUITES))
    p_check.add_argument("--samples", type=int, default=2000)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--output", help="also write the report JSON here")
    p_check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
