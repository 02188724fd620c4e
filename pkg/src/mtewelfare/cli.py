"""Command-line front end.

Usage::

    mtewelfare COMMAND --config run.json --out results/ [--seed N] [--threads N]

``COMMAND`` is one of simulate, fit, choose, welfare, regret, validate and
may also be given as the ``command`` key of the config.  Exit codes: 1 bad
configuration, 2 bad data, 3 numerical failure, 4 invariant check failed.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from ._linalg import normal_equation_residual
from .dgp import (DgpSpec, LatentSelectionSpec, normalize_selection, read_dataset, reference_spec,
                  simulate, write_dataset)
from .exceptions import (ConfigurationError, DomainError, HarnessError, SingularDesign,
                         UnsupportedDimension)
from .harness import ExperimentConfig, bound_ratio, fit_rate, run, vc_of
from .mte import ParametricMTE, diagnostics
from .policy import DecisionSet, PolicyClass
from .propensity import LinearPropensity, OraclePropensity
from .rules import CellDistribution, PosteriorSpec, bayes_rule, ewm_hybrid, ewm_known, plugin_rule
from .welfare import brute_force_welfare, empirical_welfare, oracle_best, representation_welfare

COMMANDS = ("simulate", "fit", "choose", "welfare", "regret", "validate")
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_INVARIANT = 1, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "spec": "reference",
    "n": 1000,
    "retain_latents": True,
    "dataset": None,
    "policy_class": {"kind": "powerset", "on": "x"},
    "rule": "ewm_hybrid",
    "propensity": "fitted",
    "K": 2,
    "decision_set": None,
    "bounds": {"C": 1e6, "c": 1e-3},
    "posterior": {"prior_scale": 10.0, "noise_var": 1.0, "n_draws": 1000},
    "harness": None,
    "validate_n": 100000,
    "precision": 17,
    "threads": 1,
}
KEYS = {"command"} | set(DEFAULTS)
HARNESS_KEYS = {"family", "n_grid", "replications", "rule", "propensity"}


@dataclass
class RunConfig:
    command: str
    seed: int
    spec: DgpSpec
    n: int
    retain_latents: bool
    dataset: Optional[str]
    policy_class: PolicyClass
    rule: str
    propensity: str
    K: int
    decision_set: Optional[DecisionSet]
    bounds: dict
    posterior: PosteriorSpec
    harness: Optional[ExperimentConfig]
    validate_n: int
    precision: int
    threads: int
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def digest(self):
        payload = {k: v for k, v in self.raw.items() if k != "threads"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def provenance(self):
        return f"mtewelfare {__version__} command={self.command} config_sha256={self.digest} seed={self.seed}"


def _resolve_spec(entry, where):
    if entry == "reference":
        return reference_spec()
    if not isinstance(entry, dict):
        raise ConfigurationError(f"{where}: expected 'reference' or an object")
    entry = dict(entry)
    base = entry.pop("base", None)
    if base is not None:
        if base != "reference":
            raise ConfigurationError(f"{where}.base: only 'reference' is supported")
        merged = reference_spec().to_dict()
        merged.update(entry)
        entry = merged
    try:
        return DgpSpec.from_dict(entry)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def bundled_config(name="reference_regret.json") -> dict:
    return json.loads(resources.files("mtewelfare.configs").joinpath(name).read_text())


def parse_config(path, overrides=None) -> RunConfig:
    """Read and validate a JSON run configuration.

    ``overrides`` (e.g. from command-line flags) replace config keys.  All
    violations are collected and reported together, each naming its key.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: malformed JSON ({exc})") from None
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc.strerror})") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    base_dir = os.path.dirname(os.path.abspath(path))
    return config_from_dict(raw, base_dir)


def config_from_dict(raw: dict, base_dir: str = ".") -> RunConfig:
    errors = []
    for key in sorted(set(raw) - KEYS):
        errors.append(f"unknown key: {key}")
    if "command" not in raw:
        errors.append("missing required key: command")
    elif raw["command"] not in COMMANDS:
        errors.append(f"command: must be one of {COMMANDS}, got {raw['command']!r}")
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update({k: v for k, v in raw.items() if k in KEYS})

    def check(key, fn):
        try:
            return fn()
        except (ConfigurationError, UnsupportedDimension, TypeError, ValueError) as exc:
            msg = str(exc)
            errors.append(msg if msg.startswith(key) else f"{key}: {msg}")
            return None

    def integer(key, minimum):
        v = cfg[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ConfigurationError(f"{key}: expected an integer >= {minimum}, got {v!r}")
        return v

    seed = check("seed", lambda: integer("seed", 0))
    n = check("n", lambda: integer("n", 0))
    K = check("K", lambda: integer("K", 2))
    precision = check("precision", lambda: integer("precision", 1))
    threads = check("threads", lambda: integer("threads", 1))
    validate_n = check("validate_n", lambda: integer("validate_n", 1))
    spec = check("spec", lambda: _resolve_spec(cfg["spec"], "spec"))
    pclass = check("policy_class", lambda: PolicyClass.from_dict(cfg["policy_class"]))
    dset = check("decision_set", lambda: None if cfg["decision_set"] is None
                 else DecisionSet.from_dict(cfg["decision_set"]))

    def _rule():
        if cfg["rule"] not in ("ewm_known", "ewm_hybrid", "plugin", "bayes"):
            raise ConfigurationError(f"rule: unknown rule {cfg['rule']!r}")
        return cfg["rule"]

    rule = check("rule", _rule)

    def _prop():
        if cfg["propensity"] not in ("fitted", "oracle"):
            raise ConfigurationError(f"propensity: expected 'fitted' or 'oracle', got {cfg['propensity']!r}")
        return cfg["propensity"]

    propensity = check("propensity", _prop)

    def _bounds():
        b = cfg["bounds"]
        unknown = sorted(set(b) - {"C", "c"})
        if unknown:
            raise ConfigurationError(f"bounds: unknown key {unknown[0]}")
        out = {"C": float(b.get("C", 1e6)), "c": float(b.get("c", 1e-3))}
        if out["C"] <= 0 or out["c"] <= 0:
            raise ConfigurationError("bounds: C and c must be positive")
        return out

    bounds = check("bounds", _bounds)

    def _posterior():
        p = cfg["posterior"]
        unknown = sorted(set(p) - {"prior_mean", "prior_scale", "noise_var", "n_draws"})
        if unknown:
            raise ConfigurationError(f"posterior: unknown key {unknown[0]}")
        return PosteriorSpec(**p)

    posterior = check("posterior", _posterior)

    dataset = cfg["dataset"]
    if dataset is not None:
        dataset = os.path.join(base_dir, dataset)
        if not os.path.exists(dataset):
            errors.append(f"dataset: file not found: {dataset}")

    def _harness():
        h = cfg["harness"]
        if h is None:
            if raw.get("command") == "regret":
                raise ConfigurationError("harness: required for the regret command")
            return None
        unknown = sorted(set(h) - HARNESS_KEYS)
        if unknown:
            raise ConfigurationError(f"harness: unknown key {unknown[0]}")
        family = [_resolve_spec(e, f"harness.family[{i}]") for i, e in enumerate(h.get("family", ["reference"]))]
        return ExperimentConfig(
            family=family,
            n_grid=h.get("n_grid", [250, 500, 1000, 2000, 4000]),
            replications=h.get("replications", 500),
            rule=h.get("rule", "ewm_known"),
            propensity=h.get("propensity", propensity or "fitted"),
            K=K or 2,
            policy_class=pclass or PolicyClass.power_set(),
            master_seed=seed or 0,
            posterior=posterior or PosteriorSpec(),
        )

    harness = check("harness", _harness)
    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(raw["command"], seed, spec, n, bool(cfg["retain_latents"]), dataset, pclass,
                     rule, propensity, K, dset, bounds, posterior, harness, validate_n, precision,
                     threads, raw=raw)


# --- commands -----------------------------------------------------------------

def _dataset(cfg: RunConfig):
    if cfg.dataset is not None:
        with open(cfg.dataset) as fh:
            return read_dataset(fh)
    return simulate(cfg.spec, cfg.n, cfg.seed, cfg.retain_latents)


def _fit(cfg: RunConfig, dataset):
    prop = OraclePropensity(cfg.spec) if cfg.propensity == "oracle" else LinearPropensity()
    return ParametricMTE(K=cfg.K, propensity=prop).fit_dataset(dataset)


def _write_json(path, cfg, payload):
    with open(path, "w") as fh:
        json.dump({"provenance": cfg.provenance, **payload}, fh, indent=2)
        fh.write("\n")


def _fmt(cfg, v):
    return format(float(v), f".{cfg.precision}g")


def cmd_simulate(cfg, out):
    dataset = simulate(cfg.spec, cfg.n, cfg.seed, cfg.retain_latents)
    with open(os.path.join(out, "dataset.csv"), "w") as fh:
        write_dataset(dataset, fh, provenance=cfg.provenance)
    return 0


def cmd_fit(cfg, out):
    dataset = _dataset(cfg)
    model = _fit(cfg, dataset)
    report = diagnostics(dataset, model.design_, model.theta_, **cfg.bounds)
    _write_json(os.path.join(out, "propensity.json"), cfg, model.propensity_.dump())
    _write_json(os.path.join(out, "theta.json"), cfg, model.theta_.to_dict())
    _write_json(os.path.join(out, "diagnostics.json"), cfg, report.to_dict())
    return 0


def choose(cfg: RunConfig, dataset):
    cls = cfg.policy_class
    if cfg.rule == "ewm_known":
        return ewm_known(dataset, cfg.spec, cls)
    model = _fit(cfg, dataset)
    if cfg.rule == "ewm_hybrid":
        return ewm_hybrid(dataset, model.theta_, cls)
    if cfg.rule == "plugin":
        return plugin_rule(CellDistribution.from_dataset(dataset, cls), model.theta_, cls)
    return bayes_rule(dataset, model.design_, cfg.posterior, cls, K=cfg.K,
                      seed=np.random.default_rng([cfg.seed, 1]))


def cmd_choose(cfg, out):
    dataset = _dataset(cfg)
    G = choose(cfg, dataset)
    _write_json(os.path.join(out, "decision_set.json"), cfg,
                {"rule": cfg.rule, "seed": cfg.seed, "n": dataset.n, "decision_set": G.to_dict()})
    return 0


def welfare_rows(cfg: RunConfig):
    spec, cls = cfg.spec, cfg.policy_class
    G_star, _ = oracle_best(spec, cls)
    G = cfg.decision_set if cfg.decision_set is not None else G_star
    rows = []
    for method, fn in (("brute_force", brute_force_welfare), ("representation", representation_welfare)):
        w, w_best = fn(spec, G), fn(spec, G_star)
        rows.append((method, w, w_best, w_best - w))
    dataset = _dataset(cfg)
    e_y0 = representation_welfare(spec, DecisionSet("powerset", cls.on, {"members": ()}))
    kernel = spec.integrated_effect
    w_emp = e_y0 + empirical_welfare(dataset, kernel, G)
    G_emp = ewm_known(dataset, spec, cls)
    w_emp_best = e_y0 + empirical_welfare(dataset, kernel, G_emp)
    rows.append(("empirical", w_emp, w_emp_best, w_emp_best - w_emp))
    return G, rows


def cmd_welfare(cfg, out):
    G, rows = welfare_rows(cfg)
    with open(os.path.join(out, "welfare.csv"), "w") as fh:
        fh.write(f"# {cfg.provenance}\n")
        fh.write("method,class,G,W_G_of_set,W_best,regret\n")
        for method, w, wb, r in rows:
            fh.write(",".join([method, cfg.policy_class.kind, G.describe(),
                               _fmt(cfg, w), _fmt(cfg, wb), _fmt(cfg, r)]) + "\n")
        diff = abs(rows[0][1] - rows[1][1])
        fh.write(f"# brute_force_minus_representation={_fmt(cfg, diff)}\n")
    return 0 if diff <= 1e-9 else EXIT_INVARIANT


def cmd_regret(cfg, out):
    curve = run(cfg.harness, threads=cfg.threads)
    with open(os.path.join(out, "regret.csv"), "w") as fh:
        curve.write(fh, precision=cfg.precision, provenance=cfg.provenance)
        ratios = bound_ratio(curve, max(s.m_bar for s in cfg.harness.family), vc_of(cfg.harness))
        fh.write("# bound_ratio=" + ";".join(_fmt(cfg, r) for r in ratios) + "\n")
    return 0


def invariant_checks(cfg: RunConfig):
    """(name, passed, detail) for the normalisation, representation and OLS invariants."""
    spec = cfg.spec
    checks = []
    # representation vs definition over every subset of x-cells
    cls = PolicyClass.power_set(on="x")
    cells = sorted({tuple(r) for r in spec.x_support[:, 1:].tolist()})
    worst = 0.0
    for k in range(len(cells) + 1):
        for members in itertools.combinations(cells, k):
            G = DecisionSet("powerset", "x", {"members": tuple(members)})
            worst = max(worst, abs(brute_force_welfare(spec, G) - representation_welfare(spec, G)))
    checks.append(("welfare_representation", worst <= 1e-9, f"max_abs_diff={worst:.3e} tol=1e-9"))

    # uniform latent and selection consistency on a simulated sample
    ds = simulate(spec, cfg.validate_n, cfg.seed)
    ks = stats.kstest(ds.u, "uniform").statistic
    checks.append(("latent_uniform", ks <= 0.01, f"ks={ks:.4g} tol=0.01"))
    for family, params, cut in (("exponential", {"rate": 1.0}, 1.0), ("normal", {}, 0.5)):
        lat = LatentSelectionSpec(family, params, threshold=lambda z, c=cut: c)
        rng = np.random.default_rng([cfg.seed, 2])
        u_tilde = lat.draw(cfg.validate_n, rng)
        nu, F = normalize_selection(lat, None)
        agree = np.mean((cut >= u_tilde) == (nu >= F(u_tilde)))
        ks_n = stats.kstest(F(u_tilde), "uniform").statistic
        checks.append((f"normalization_{family}", agree == 1.0 and ks_n <= 0.01,
                       f"agreement={agree:.6f} ks={ks_n:.4g} tol=0.01"))

    # OLS normal equations
    model = _fit(cfg, ds)
    resid = normal_equation_residual(model.design_, ds.y, model.theta_.vector)
    checks.append(("normal_equations", resid <= 1e-8, f"residual={resid:.3e} tol=1e-8"))
    return checks


def cmd_validate(cfg, out):
    checks = invariant_checks(cfg)
    with open(os.path.join(out, "validate.txt"), "w") as fh:
        fh.write(f"# {cfg.provenance}\n")
        for name, ok, detail in checks:
            fh.write(f"{'PASS' if ok else 'FAIL'} {name} {detail}\n")
    return 0 if all(ok for _, ok, _ in checks) else EXIT_INVARIANT


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "choose": cmd_choose,
            "welfare": cmd_welfare, "regret": cmd_regret, "validate": cmd_validate}


def run_command(cfg: RunConfig, out: str) -> int:
    os.makedirs(out, exist_ok=True)
    return HANDLERS[cfg.command](cfg, out)


def build_parser():
    parser = argparse.ArgumentParser(prog="mtewelfare", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", nargs="?", choices=COMMANDS,
                        help="overrides the config's command key")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--threads", type=int, help="worker threads; never changes results")
    parser.add_argument("--version", action="version", version=f"mtewelfare {__version__}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"command": args.command, "seed": args.seed, "threads": args.threads}
    try:
        cfg = parse_config(args.config, overrides)
        return run_command(cfg, args.out)
    except (ConfigurationError, UnsupportedDimension) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularDesign, HarnessError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
