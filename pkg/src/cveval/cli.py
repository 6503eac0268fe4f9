"""Command-line surface.

Subcommands:

  simulate  draw a data set from one model family at fixed parameters
  fit       run the sampler on a data set; save draws and diagnostics
  criteria  information criteria (dic / nwaic / iwaic / nis / iis) from one run
  loocv     actual leave-one-out refits: per-unit log predictive density + CVIC
  pvalues   CV predictive p-values: fast estimates, optional refit ground truth
  study     replication study over a mixture K grid

Configuration comes from a TOML file (`--config`); `--seed` and `--out`
override the corresponding keys, `--full-scale` switches the study from
desk scale to the 100-replication protocol. Every output is a
deterministic function of (config, seed): UTF-8 CSV with a header row and
JSON manifests with sorted keys, no timestamps anywhere.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from . import datasets
from . import evaluators as ev
from .errors import ConfigError, LoadError
from .mcmc import ChainConfig, SampleStore, run_chains, run_cv_batched, actual_cv_run
from .models.car import CarModel, CarStructure, car_simulate, CAR_VARIANTS
from .models.mixture import MixtureModel, mixture_simulate
from .models.seeds import SeedsModel, seeds_simulate
from .rng import RngStream
from .study import METHODS, run_study, ttest_adjacent

__all__ = ["main", "RunConfig", "emit_outputs"]

FAMILIES = ("mixture", "car", "seeds")

#: retained-draw schedules sized for a desk machine (~20k retained each)
DESK_CHAINS = {
    "mixture": dict(n_chains=1, n_adapt=1000, n_burn=2000, n_sample=40000, thin=2),
    "seeds": dict(n_chains=5, n_adapt=1000, n_burn=2500, n_sample=10000, thin=1),
    "car": dict(n_chains=2, n_adapt=1000, n_burn=2000, n_sample=10000, thin=1),
}

PVALUE_METHODS = ("posterior-check", "ghosting", "nis", "iis")


class RunConfig:
    """Resolved run configuration: TOML keys with CLI overrides applied."""

    def __init__(self, raw=None, seed=None, out=None, full_scale=False):
        raw = dict(raw or {})
        self.raw = raw
        self.family = raw.get("family")
        if self.family not in FAMILIES:
            raise ConfigError(f"config needs family, one of {FAMILIES}")
        self.variant = raw.get("variant", "full")
        if self.family == "car" and self.variant not in CAR_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {CAR_VARIANTS}")
        self.k = int(raw.get("k", 5))
        self.data = raw.get("data")
        self.adjacency = raw.get("adjacency")
        self.symmetrize = bool(raw.get("symmetrize", False))
        self.seed = int(seed if seed is not None else raw.get("seed", 0))
        self.out = Path(out if out is not None else raw.get("out", "cveval-out"))
        self.full_scale = bool(full_scale or raw.get("full_scale", False))
        self.methods = list(raw.get("methods", METHODS))
        if not self.methods:
            raise ConfigError("evaluator list must be non-empty")
        default_r = {"car": 200, "seeds": 30, "mixture": None}[self.family]
        self.r_draws = raw.get("r_draws", default_r)
        self.k_draws = raw.get("k_draws", self.r_draws if self.r_draws else 30)
        chains = dict(DESK_CHAINS[self.family])
        chains.update(raw.get("chains", {}))
        self.chains = ChainConfig(seed=self.seed, **chains)
        for name in ("simulate", "study", "loocv", "pvalues", "criteria"):
            setattr(self, f"{name}_opts", dict(raw.get(name, {})))

    @classmethod
    def from_args(cls, args):
        raw = {}
        if args.config:
            try:
                with open(args.config, "rb") as fh:
                    raw = tomllib.load(fh)
            except OSError as exc:
                raise LoadError(f"cannot read config {args.config}: {exc}") from exc
            except tomllib.TOMLDecodeError as exc:
                raise LoadError(f"bad TOML in {args.config}: {exc}") from exc
        return cls(raw, seed=args.seed, out=args.out, full_scale=args.full_scale)

    def manifest(self, command):
        cfg = {k: v for k, v in sorted(self.raw.items())}
        return {
            "command": command,
            "config": cfg,
            "family": self.family,
            "seed": self.seed,
            "package_version": __version__,
            "dic_convention": "penalty = var(deviance) / 2",
            "schedule": {
                "n_chains": self.chains.n_chains,
                "n_adapt": self.chains.n_adapt,
                "n_burn": self.chains.n_burn,
                "n_sample": self.chains.n_sample,
                "thin": self.chains.thin,
            },
        }


# ---------------------------------------------------------------------------
# deterministic writers


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def emit_outputs(results, out_dir):
    """Write named tables: {'name': ('csv', header, rows) | ('json', obj)}.
    Returns the written paths in name order."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise LoadError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    for name in sorted(results):
        payload = results[name]
        if payload[0] == "csv":
            written.append(write_csv(out_dir / f"{name}.csv", payload[1], payload[2]))
        elif payload[0] == "json":
            written.append(write_json(out_dir / f"{name}.json", payload[1]))
        else:
            raise ConfigError(f"unknown output format {payload[0]!r}")
    return written


# ---------------------------------------------------------------------------
# model construction


def load_dataset(cfg):
    if cfg.family == "mixture":
        return datasets.load_galaxy(cfg.data)
    if cfg.family == "seeds":
        return datasets.load_seeds(cfg.data)
    return datasets.load_lipcancer(cfg.data, cfg.adjacency, symmetrize=cfg.symmetrize)


def build_model(cfg, data=None):
    data = data if data is not None else load_dataset(cfg)
    if cfg.family == "mixture":
        return MixtureModel(data, cfg.k)
    if cfg.family == "seeds":
        return SeedsModel(data, r_draws=int(cfg.r_draws))
    structure = CarStructure.from_data(data)
    return CarModel(data.y, structure, variant=cfg.variant, r_draws=int(cfg.r_draws))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg):
    rng = RngStream(cfg.seed, 1).substream("simulate")
    opts = cfg.simulate_opts
    if cfg.family == "mixture":
        n = int(opts.get("n", 200))
        y, z = mixture_simulate(
            n,
            rng,
            means=tuple(opts.get("means", (-7.0, -2.0, 1.0, 7.0))),
            sds=opts.get("sds"),
            weights=opts.get("weights"),
        )
        table = ("csv", ["y", "component"], [(yi, int(zi)) for yi, zi in zip(y, z)])
    elif cfg.family == "seeds":
        d = datasets.load_seeds(cfg.data)
        r, _ = seeds_simulate(
            rng,
            d.x1,
            d.x2,
            d.n,
            coef=tuple(opts.get("coef", (-0.55, 0.1, 1.3, -0.8))),
            sigma2=float(opts.get("sigma2", 0.1)),
        )
        table = (
            "csv",
            ["r", "n", "x1", "x2"],
            list(zip(r.tolist(), d.n.tolist(), d.x1.tolist(), d.x2.tolist())),
        )
    else:
        d = datasets.load_lipcancer(cfg.data, cfg.adjacency, symmetrize=cfg.symmetrize)
        structure = CarStructure.from_data(d)
        y, _ = car_simulate(
            rng,
            structure,
            variant=cfg.variant,
            alpha=float(opts.get("alpha", 0.0)),
            beta=float(opts.get("beta", 0.3)),
            tau2=float(opts.get("tau2", 0.3)),
            phi=float(opts.get("phi", 0.05)),
        )
        rows = [
            (i + 1, int(y[i]), d.expected[i], d.x[i]) for i in range(structure.n)
        ]
        table = ("csv", ["district", "y", "E", "x"], rows)
    return emit_outputs(
        {"simulated": table, "manifest": ("json", cfg.manifest("simulate"))}, cfg.out
    )


def _diag_summary(store):
    diag = store.meta.get("diagnostics")
    if not diag:
        return None
    rhats = [v for v in diag["rhat"].values() if np.isfinite(v)]
    esss = [v for v in diag["ess"].values() if np.isfinite(v)]
    return {
        "max_rhat": max(rhats) if rhats else None,
        "min_ess": min(esss) if esss else None,
    }


def cmd_fit(cfg):
    model = build_model(cfg)
    store = run_chains(model, cfg.chains)
    cfg.out.mkdir(parents=True, exist_ok=True)
    store_path = cfg.out / "fit.store"
    store.save(store_path)
    manifest = cfg.manifest("fit")
    manifest["store"] = store_path.name
    manifest["acceptance"] = {k: round(v, 6) for k, v in store.meta["acceptance"].items()}
    manifest["diagnostics"] = _diag_summary(store)
    files = emit_outputs({"manifest": ("json", manifest)}, cfg.out)
    return [store_path] + files


def _load_or_fit(cfg):
    store_path = cfg.criteria_opts.get("store")
    model = build_model(cfg)
    if store_path:
        return model, SampleStore.load(store_path)
    return model, run_chains(model, cfg.chains, diagnostics=False)


def cmd_criteria(cfg):
    model, store = _load_or_fit(cfg)
    ic_rows = []
    unit_rows = []
    for method in cfg.methods:
        if method == "dic":
            d = ev.dic(store, model)
            ic_rows.append((method, d.value, d.mean_deviance, d.penalty))
            continue
        evals = ev.evaluate_units(store, model, method, r_draws=cfg.r_draws)
        ic_rows.append((method, ev.ic_from_units(evals, n_units=model.n_units), None, None))
        unit_rows += [(e.unit, method, e.value, e.mc_se) for e in evals]
    results = {
        "criteria": ("csv", ["method", "ic", "mean_deviance", "penalty"], ic_rows),
        "per_unit": ("csv", ["unit", "method", "value", "mc_se"], unit_rows),
        "manifest": ("json", cfg.manifest("criteria")),
    }
    for unit in cfg.criteria_opts.get("fig3_units", []):
        unit = int(unit)
        if cfg.family != "mixture":
            raise ConfigError("fig3_units applies to the mixture family only")
        z = store.unit_latent(unit).astype(np.int64)
        mu_z = model.theta_view(store.theta).mu[np.arange(store.n_draws), z]
        ld = model.nonint_logpred(unit, store.theta, store.unit_latent(unit))
        results[f"fig3_unit{unit}"] = (
            "csv",
            ["mu_z", "log_density"],
            list(zip(mu_z.tolist(), ld.tolist())),
        )
    return emit_outputs(results, cfg.out)


def _cv_results(cfg, model, units):
    if bool(cfg.loocv_opts.get("batched", True)):
        return run_cv_batched(model, cfg.chains, units=units)
    return actual_cv_run(model, cfg.chains, units=units)


def cmd_loocv(cfg):
    model = build_model(cfg)
    units = [int(u) for u in cfg.loocv_opts.get("units", [])] or list(range(model.n_units))
    pred = model.pred_density_evalfn()
    rows = []
    values = {}
    for res in _cv_results(cfg, model, units):
        if res.failed:
            rows.append((res.unit, None, None, res.error))
            continue
        e = ev.actual_cv_expectation(res.store, model, pred)
        rows.append((res.unit, e.value, e.mc_se, None))
        values[res.unit] = e.value
    complete = len(values) == len(units) == model.n_units
    cvic = ev.ic_from_units(values, n_units=model.n_units) if complete else None
    summary = [("cvic", cvic, len(values), len(units) - len(values))]
    return emit_outputs(
        {
            "loocv": ("csv", ["unit", "log_ppd", "mc_se", "error"], rows),
            "cvic": ("csv", ["criterion", "value", "n_units", "n_failed"], summary),
            "manifest": ("json", cfg.manifest("loocv")),
        },
        cfg.out,
    )


def cmd_pvalues(cfg):
    model = build_model(cfg)
    if not model.has_midp:
        raise ConfigError(f"family {cfg.family!r} has no tail-probability evaluation")
    opts = cfg.pvalues_opts
    methods = list(opts.get("methods", PVALUE_METHODS))
    unknown = set(methods) - set(PVALUE_METHODS)
    if unknown:
        raise ConfigError(f"unknown p-value methods {sorted(unknown)}")
    store = run_chains(model, cfg.chains, diagnostics=False)
    midp = model.midp_evalfn()
    k_draws = int(opts.get("k_draws", cfg.k_draws))
    units = list(range(model.n_units))
    estimate = {
        "posterior-check": lambda i: ev.posterior_check_pvalue(store, model, i, midp),
        "ghosting": lambda i: ev.ghosting_pvalue(store, model, i, midp, k_draws=k_draws),
        "nis": lambda i: ev.is_expectation(store, model, i, midp),
        "iis": lambda i: ev.iis_expectation(
            store, model, i, midp, r_draws=cfg.r_draws, k_draws=k_draws
        ),
    }
    per = {m: [estimate[m](i) for i in units] for m in methods}
    rows = [
        (i, m, per[m][i].value, per[m][i].mc_se) for m in methods for i in units
    ]
    results = {
        "pvalues": ("csv", ["unit", "method", "value", "mc_se"], rows),
        "manifest": ("json", cfg.manifest("pvalues")),
    }
    if bool(opts.get("actual", False)):
        actual = {}
        for res in run_cv_batched(model, cfg.chains, units=units):
            if not res.failed:
                actual[res.unit] = ev.actual_cv_expectation(res.store, model, midp).value
        done = sorted(actual)
        results["pvalues_actual"] = (
            "csv",
            ["unit", "value"],
            [(i, actual[i]) for i in done],
        )
        re_rows = []
        for m in methods:
            est = [per[m][i].value for i in done]
            ref = [actual[i] for i in done]
            re_rows.append((m, ev.relative_error(est, ref)))
        results["pvalues_re"] = ("csv", ["method", "relative_error_pct"], re_rows)
        results["fig4"] = (
            "csv",
            ["unit", "method", "actual", "estimate"],
            [(i, m, actual[i], per[m][i].value) for i in done for m in methods],
        )
    return emit_outputs(results, cfg.out)


def cmd_study(cfg):
    if cfg.family != "mixture":
        raise ConfigError("the replication study is defined for the mixture family")
    opts = cfg.study_opts
    m_reps = int(opts.get("m_reps", 10))
    if cfg.full_scale:
        m_reps = int(opts.get("m_reps_full", 100))
    k_grid = [int(k) for k in opts.get("k_grid", (2, 3, 4, 5, 6, 7))]
    n_points = int(opts.get("n_points", 200))
    sr = run_study(
        m_reps,
        k_grid=k_grid,
        n_points=n_points,
        methods=cfg.methods,
        config=cfg.chains,
        seed=cfg.seed,
    )
    t = sr.table
    mean_rows = [[k] + [t.mean.get((k, m)) for m in t.columns] for k in t.rows]
    sd_rows = [[k] + [t.sd.get((k, m)) for m in t.columns] for k in t.rows]
    disp_rows = []
    for k in t.rows:
        cells = [k]
        for m in t.columns:
            mu = t.mean.get((k, m))
            sd = t.sd.get((k, m))
            if mu is None:
                cells.append("")
            elif sd is None:
                cells.append(f"{mu:.2f}")
            else:
                cells.append(f"{mu:.2f} ({sd:.2f})")
        disp_rows.append(cells)
    sel_rows = [
        (m, k, sr.selection.get(m, {}).get(k, 0)) for m in t.columns for k in t.rows
    ]
    tt_rows = []
    for m in cfg.methods:
        if m == "dic":
            continue
        for (hi, lo), p in sorted(ttest_adjacent(sr.records, m, seed=cfg.seed).items()):
            tt_rows.append((m, hi, lo, p))
    records = [
        {k: v for k, v in r.items()} for r in sr.records
    ]
    results = {
        "study_mean": ("csv", ["K"] + list(t.columns), mean_rows),
        "study_sd": ("csv", ["K"] + list(t.columns), sd_rows),
        "study_table": ("csv", ["K"] + list(t.columns), disp_rows),
        "study_selection": ("csv", ["method", "K", "count"], sel_rows),
        "study_ttests": ("csv", ["method", "k_high", "k_low", "p"], tt_rows),
        "study_records": ("json", {"records": records, "failures": sr.failures}),
        "manifest": ("json", cfg.manifest("study")),
    }
    return emit_outputs(results, cfg.out)


# ---------------------------------------------------------------------------


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "criteria": cmd_criteria,
    "loocv": cmd_loocv,
    "pvalues": cmd_pvalues,
    "study": cmd_study,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cveval",
        description="Cross-validatory evaluation of Bayesian latent-variable models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument(
            "--full-scale",
            action="store_true",
            help="run the full replication protocol instead of the desk-scale one",
        )
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        written = _COMMANDS[args.command](cfg)
    except (ConfigError, LoadError) as exc:
        print(f"cveval: error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
