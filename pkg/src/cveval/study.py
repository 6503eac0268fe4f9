"""Replication studies: simulate, fit a model grid, tabulate criteria.

The canonical study simulates data sets from a four-component normal
mixture, fits mixtures with K on a grid to each, and records every
requested criterion. Aggregation (mean/sd tables, model-selection
frequencies, replication-averaged t-tests) is a pure function of the
per-replication records, so emitted tables can always be regenerated
bit-identically from the stored records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import evaluators as ev
from .errors import ConfigError, NumericalError
from .mcmc import ChainConfig, run_chains
from .models.mixture import MixtureModel, mixture_simulate
from .rng import RngStream

__all__ = ["ResultsTable", "StudyResult", "run_study", "aggregate", "selection_frequencies", "ttest_adjacent", "criterion_values"]

#: criteria computable from one full-data run, in reporting order
METHODS = ("dic", "nwaic", "iwaic", "nis", "iis")


@dataclass
class ResultsTable:
    """rows = model labels, columns = methods, cells = mean(sd) over the
    replications that completed; eff_m counts them per cell."""

    rows: list
    columns: list
    mean: dict
    sd: dict
    eff_m: dict


@dataclass
class StudyResult:
    records: list = field(default_factory=list)
    table: ResultsTable | None = None
    selection: dict | None = None
    failures: list = field(default_factory=list)


def criterion_values(store, model, methods=METHODS, r_draws=None):
    """All requested criteria from one run. Returns {method: (ic, evals)}
    where evals is the per-unit evaluation list, or None for dic (it has
    no per-unit decomposition)."""
    out = {}
    for method in methods:
        if method == "dic":
            out[method] = (ev.dic(store, model).value, None)
        else:
            evals = ev.evaluate_units(store, model, method, r_draws=r_draws)
            out[method] = (ev.ic_from_units(evals, n_units=model.n_units), evals)
    return out


def run_study(
    m_reps,
    k_grid=(2, 3, 4, 5, 6, 7),
    n_points=200,
    methods=METHODS,
    config=None,
    seed=0,
    means=(-7.0, -2.0, 1.0, 7.0),
    sds=None,
    weights=None,
):
    """Mixture replication study: simulate m_reps data sets, fit every K
    on the grid, record all criteria. A replication that fails numerically
    for some K is logged and excluded from that cell only."""
    if m_reps < 1:
        raise ConfigError("need at least one replication")
    if not methods:
        raise ConfigError("evaluator list must be non-empty")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    config = config if config is not None else ChainConfig(seed=seed)
    root = RngStream(seed, 1)
    result = StudyResult()
    for m in range(m_reps):
        y, _ = mixture_simulate(
            n_points, root.substream("study", m, "data"), means=means, sds=sds, weights=weights
        )
        for k in k_grid:
            model = MixtureModel(y, k)
            try:
                store = run_chains(
                    model, config, rng=root.substream("study", m, "fit", k), diagnostics=False
                )
                values = criterion_values(store, model, methods=methods)
            except NumericalError as err:
                result.failures.append({"rep": m, "K": k, "error": str(err)})
                continue
            for method, (ic, evals) in values.items():
                per_unit = None if evals is None else [e.value for e in evals]
                result.records.append(
                    {"rep": m, "K": int(k), "method": method, "ic": float(ic), "per_unit": per_unit}
                )
    result.table = aggregate(result.records, rows=list(k_grid), columns=list(methods))
    result.selection = selection_frequencies(result.records)
    return result


def aggregate(records, rows=None, columns=None):
    """mean(sd) table over replications, re-derivable from records alone."""
    if rows is None:
        rows = sorted({r["K"] for r in records})
    if columns is None:
        columns = sorted({r["method"] for r in records})
    cells = {}
    for r in records:
        cells.setdefault((r["K"], r["method"]), []).append(r["ic"])
    mean, sd, eff = {}, {}, {}
    for key, vals in cells.items():
        mean[key] = float(np.mean(vals))
        sd[key] = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
        eff[key] = len(vals)
    return ResultsTable(rows=list(rows), columns=list(columns), mean=mean, sd=sd, eff_m=eff)


def selection_frequencies(records):
    """Per method: how often each K attains the minimum criterion value."""
    by_rep = {}
    for r in records:
        by_rep.setdefault((r["rep"], r["method"]), []).append((r["ic"], r["K"]))
    out = {}
    for (_, method), pairs in by_rep.items():
        best_k = min(pairs)[1]
        out.setdefault(method, {})
        out[method][best_k] = out[method].get(best_k, 0) + 1
    return out


def ttest_adjacent(records, method, draws=1000, seed=0):
    """Replication-averaged one-sided paired t-tests comparing per-unit
    log predictive densities of adjacent K values (larger minus smaller:
    small p favors the larger model)."""
    runs = {}
    for r in records:
        if r["method"] == method and r["per_unit"] is not None:
            runs.setdefault(r["K"], []).append(np.asarray(r["per_unit"]))
    ks = sorted(runs)
    out = {}
    for a, b in zip(ks[1:], ks[:-1]):
        out[(a, b)] = ev.ttest_replication_average(
            runs[a], runs[b], draws=draws, rng=RngStream(seed, 1).substream("ttest", a, b)
        )
    return out
