"""Predictive evaluation estimators.

Ground truth for unit i is an expectation under the held-out posterior
(unit i's likelihood factor removed, its latent variable restored to the
conditional prior), computed from an actual refit. Everything else here
estimates such expectations from a single full-data run:

  nis            importance sampling weighted by 1 / (non-integrated
                 predictive density): the harmonic-mean estimator of the
                 held-out predictive density
  iis            the integrated variant: weights use the predictive density
                 with the unit's latent averaged out under its conditional
                 prior, and evaluation functions are averaged over
                 regenerated latents before weighting
  nwaic / iwaic  the WAIC-style bias-corrected log predictive density,
                 applied to non-integrated / integrated densities
  dic            deviance-based criterion with variance-of-deviance penalty
  posterior check / ghosting
                 p-value estimators: plain posterior mean of the tail
                 function, and the same with regenerated latents (ghosting
                 equals the integrated estimator with all weights forced
                 to one)

Log predictive densities are never exponentiated unshifted; every weighted
mean is computed through log_sum_exp. Monte Carlo standard errors come
from contiguous batch means in chain order, which respects autocorrelation
well enough for reporting purposes.

Per-unit intermediates (density vectors, regenerated latents) are cached
on the store so estimators sharing inputs — iis and iwaic, the integrated
p-value and ghosting — see identical numbers, and repeated calls are free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import probcore as pc
from .errors import ConfigError, NumericalError
from .rng import RngStream

__all__ = [
    "PerUnitEvaluation",
    "CriterionReport",
    "EvalFunction",
    "DicResult",
    "actual_cv_expectation",
    "nis_ppd",
    "iis_ppd",
    "is_expectation",
    "iis_expectation",
    "waic_ppd",
    "nwaic_ppd",
    "iwaic_ppd",
    "ic_from_units",
    "dic",
    "posterior_check_pvalue",
    "ghosting_pvalue",
    "relative_error",
    "paired_onesided_ttest",
    "ttest_replication_average",
    "evaluate_units",
]


@dataclass(frozen=True)
class PerUnitEvaluation:
    unit: int
    method: str
    value: float
    mc_se: float


@dataclass
class CriterionReport:
    model: str
    method: str
    ic: float
    per_unit: list = field(default_factory=list)
    rep_mean: float | None = None
    rep_sd: float | None = None


@dataclass(frozen=True)
class EvalFunction:
    """An evaluation function a(y_i, theta, b_i), vectorized over draws:
    fn(i, theta_rows, b) where b may carry an extra trailing draw axis.
    tag selects estimator special-casing: 'pred-density' averages on the
    log scale and collapses the integrated numerator to one."""

    fn: object
    tag: str = "custom"
    name: str = "custom"


# ---------------------------------------------------------------------------
# standard errors by contiguous batch means


def _batch_count(n):
    return 20 if n >= 40 else max(2, n // 2)


def _batch_views(values, nb):
    values = np.asarray(values, dtype=np.float64)
    edge = (values.shape[0] // nb) * nb
    return values[:edge].reshape(nb, -1)


def _mean_se(values):
    nb = _batch_count(len(values))
    b = _batch_views(values, nb).mean(axis=1)
    return float(b.std(ddof=1) / np.sqrt(nb))


def _log_mean_se(log_values):
    """SE of log(mean(exp(log_values))), batch means + delta method."""
    log_values = np.asarray(log_values, dtype=np.float64)
    shift = log_values.max()
    if not np.isfinite(shift):
        return float("nan")
    w = np.exp(log_values - shift)
    return float(_mean_se(w) / w.mean())


def _ratio_se(num_terms, den_terms):
    """SE of sum(num)/sum(den) from batch-level ratios."""
    nb = _batch_count(len(den_terms))
    bn = _batch_views(num_terms, nb).sum(axis=1)
    bd = _batch_views(den_terms, nb).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = bn / bd
    r = r[np.isfinite(r)]
    if r.size < 2:
        return float("nan")
    return float(r.std(ddof=1) / np.sqrt(r.size))


# ---------------------------------------------------------------------------
# cached per-unit inputs


def _eval_rng(store, i, purpose):
    seed = store.meta.get("seed", 0)
    return RngStream(int(seed), 1).substream("eval", purpose, int(i))


def _nonint_ld(store, model, i):
    key = ("nonint_ld", i)
    if key not in store.cache:
        store.cache[key] = np.asarray(
            model.nonint_logpred(i, store.theta, store.unit_latent(i)), dtype=np.float64
        )
    return store.cache[key]


def _int_ld(store, model, i, r_draws, rng):
    R = model.r_draws if r_draws is None else int(r_draws)
    key = ("int_ld", i, R)
    if key not in store.cache:
        if rng is None:
            rng = _eval_rng(store, i, "int")
        store.cache[key] = np.asarray(
            model.int_logpred(i, store.theta, store.latent, rng, r_draws=R),
            dtype=np.float64,
        )
    return store.cache[key]


def _regen(store, model, i, k_draws, rng):
    key = ("regen", i, int(k_draws))
    if key not in store.cache:
        if rng is None:
            rng = _eval_rng(store, i, "regen")
        store.cache[key] = np.asarray(
            model.regen_latent(i, store.theta, store.latent, rng, size=int(k_draws)),
            dtype=np.float64,
        )
    return store.cache[key]


# ---------------------------------------------------------------------------
# actual-CV ground truth


def actual_cv_expectation(cv_store, model, a):
    """Expectation of the evaluation function under a held-out refit.

    For the predictive-density function the value is reported on the log
    scale (log of the posterior-mean density), like every density
    estimator here; p-values and custom functions are plain means.
    """
    i = cv_store.holdout
    if i is None:
        raise ConfigError("store was not produced by a held-out refit")
    if cv_store.n_draws == 0:
        raise ConfigError("empty store")
    theta = cv_store.theta
    b = cv_store.unit_latent(i)
    if a.tag == "pred-density":
        ld = np.asarray(model.nonint_logpred(i, theta, b), dtype=np.float64)
        value = pc.log_sum_exp(ld) - np.log(ld.shape[0])
        return PerUnitEvaluation(i, "actual-cv", float(value), _log_mean_se(ld))
    vals = np.asarray(a.fn(i, theta, b), dtype=np.float64)
    return PerUnitEvaluation(i, "actual-cv", float(vals.mean()), _mean_se(vals))


# ---------------------------------------------------------------------------
# density estimators from a full-data run


def _harmonic_log_ppd(ld, i, method):
    ld = np.asarray(ld, dtype=np.float64)
    S = ld.shape[0]
    if S == 0:
        raise ConfigError("empty store")
    if np.any(np.isneginf(ld)):
        warnings.warn(
            f"unit {i}: a draw has zero predictive density; {method} collapses to -inf",
            RuntimeWarning,
            stacklevel=3,
        )
        return PerUnitEvaluation(i, method, float("-inf"), float("nan"))
    value = np.log(S) - pc.log_sum_exp(-ld)
    return PerUnitEvaluation(i, method, float(value), _log_mean_se(-ld))


def nis_ppd(store, model, i):
    """Harmonic-mean estimate of the held-out log predictive density from
    non-integrated per-draw densities."""
    return _harmonic_log_ppd(_nonint_ld(store, model, i), i, "nis")


def iis_ppd(store, model, i, r_draws=None, rng=None):
    """Same estimator on integrated per-draw densities (the unit's latent
    averaged out under its conditional prior); the unit's own latent draws
    are never read."""
    return _harmonic_log_ppd(_int_ld(store, model, i, r_draws, rng), i, "iis")


def is_expectation(store, model, i, a):
    """Importance-sampling estimate of the held-out expectation of a,
    weights 1 / (non-integrated predictive density)."""
    if a.tag == "pred-density":
        out = nis_ppd(store, model, i)
        return PerUnitEvaluation(i, "is", out.value, out.mc_se)
    ld = _nonint_ld(store, model, i)
    vals = np.asarray(a.fn(i, store.theta, store.unit_latent(i)), dtype=np.float64)
    return _weighted(vals, ld, i, "is")


def iis_expectation(store, model, i, a, r_draws=None, k_draws=None, rng=None):
    """Integrated importance sampling: average a over regenerated latents,
    weight by 1 / (integrated predictive density)."""
    if a.tag == "pred-density":
        out = iis_ppd(store, model, i, r_draws=r_draws, rng=rng)
        return PerUnitEvaluation(i, "iis", out.value, out.mc_se)
    K = _default_k(model, k_draws)
    ld = _int_ld(store, model, i, r_draws, rng)
    regen = _regen(store, model, i, K, rng)
    avals = np.asarray(a.fn(i, store.theta, regen), dtype=np.float64)
    return _weighted(avals.mean(axis=-1), ld, i, "iis")


def _default_k(model, k_draws):
    if k_draws is not None:
        return int(k_draws)
    return model.r_draws if model.r_draws is not None else 30


def _weighted(vals, ld, i, method):
    """sum(a W) / sum(W) with W = exp(-ld), log-shifted."""
    neg = -np.asarray(ld, dtype=np.float64)
    shift = neg.max()
    if np.isneginf(shift):
        raise NumericalError(f"unit {i}: all importance weights are zero")
    if np.isposinf(shift):
        warnings.warn(
            f"unit {i}: a draw has zero predictive density; weights blow up",
            RuntimeWarning,
            stacklevel=3,
        )
        keep = np.isposinf(neg)
        vals = np.where(keep, vals, 0.0)
        w = keep.astype(np.float64)
    else:
        w = np.exp(neg - shift)
    value = float((vals * w).sum() / w.sum())
    return PerUnitEvaluation(i, method, value, _ratio_se(vals * w, w))


def waic_ppd(log_densities, unit=-1, method="waic"):
    """Bias-corrected log predictive density: log-mean density minus the
    sample variance of the log densities."""
    ld = np.asarray(log_densities, dtype=np.float64)
    if ld.ndim != 1 or ld.shape[0] < 2:
        raise ConfigError("waic needs at least two draws")
    log_mean = pc.log_sum_exp(ld) - np.log(ld.shape[0])
    value = log_mean - pc.sample_variance(ld)
    nb = _batch_count(ld.shape[0])
    b = _batch_views(ld, nb)
    if b.shape[1] < 2:
        se = float("nan")
    else:
        bvals = [
            pc.log_sum_exp(row) - np.log(row.shape[0]) - pc.sample_variance(row)
            for row in b
        ]
        se = float(np.std(bvals, ddof=1) / np.sqrt(nb))
    return PerUnitEvaluation(int(unit), method, float(value), se)


def nwaic_ppd(store, model, i):
    return waic_ppd(_nonint_ld(store, model, i), unit=i, method="nwaic")


def iwaic_ppd(store, model, i, r_draws=None, rng=None):
    return waic_ppd(_int_ld(store, model, i, r_draws, rng), unit=i, method="iwaic")


# ---------------------------------------------------------------------------
# criteria


def ic_from_units(per_unit, n_units=None):
    """-2 times the summed per-unit log predictive densities. Accepts
    PerUnitEvaluation lists, plain values, or {unit: value} mappings;
    missing units are an error naming the gaps."""
    if isinstance(per_unit, dict):
        values = per_unit
    else:
        values = {}
        for k, item in enumerate(per_unit):
            if isinstance(item, PerUnitEvaluation):
                values[item.unit] = item.value
            else:
                values[k] = item
    if n_units is not None:
        missing = sorted(set(range(n_units)) - set(values))
        if missing:
            raise ConfigError(f"missing units in criterion sum: {missing}")
    vals = [values[k] for k in sorted(values)]
    if any(v is None or not np.isfinite(v) for v in vals):
        bad = [k for k in sorted(values) if values[k] is None or not np.isfinite(values[k])]
        raise ConfigError(f"non-finite per-unit values for units {bad}")
    return -2.0 * float(np.sum(vals))


@dataclass(frozen=True)
class DicResult:
    value: float
    mean_deviance: float
    penalty: float
    convention: str = "penalty = var(deviance) / 2"

    def __float__(self):
        return self.value


def dic(store, model):
    """Deviance information criterion from per-draw deviances
    D = -2 sum_i log p(y_i | theta, b_i), penalty var(D)/2."""
    total = np.zeros(store.n_draws)
    for i in range(model.n_units):
        total += _nonint_ld(store, model, i)
    deviance = -2.0 * total
    dbar = float(deviance.mean())
    pd = float(pc.sample_variance(deviance) / 2.0)
    return DicResult(value=dbar + pd, mean_deviance=dbar, penalty=pd)


# ---------------------------------------------------------------------------
# p-value estimators


def posterior_check_pvalue(store, model, i, a=None):
    """Plain posterior mean of the tail function at the unit's own draws
    (no held-out correction at all)."""
    a = a if a is not None else model.midp_evalfn()
    vals = np.asarray(a.fn(i, store.theta, store.unit_latent(i)), dtype=np.float64)
    return PerUnitEvaluation(i, "posterior-check", float(vals.mean()), _mean_se(vals))


def ghosting_pvalue(store, model, i, a=None, k_draws=None, rng=None):
    """Tail function averaged over regenerated latents, equally weighted:
    the integrated estimator with all importance weights forced to one."""
    a = a if a is not None else model.midp_evalfn()
    K = _default_k(model, k_draws)
    regen = _regen(store, model, i, K, rng)
    avals = np.asarray(a.fn(i, store.theta, regen), dtype=np.float64)
    inner = avals.mean(axis=-1)
    return PerUnitEvaluation(i, "ghosting", float(inner.mean()), _mean_se(inner))


def relative_error(estimates, reference):
    """Mean absolute relative error in percent, with the distance of the
    reference to its nearer endpoint of (0, 1) as denominator."""
    p_hat = np.asarray(estimates, dtype=np.float64)
    p = np.asarray(reference, dtype=np.float64)
    if p_hat.shape != p.shape:
        raise ConfigError("estimate and reference lengths differ")
    if np.any((p <= 0) | (p >= 1)):
        raise ConfigError("reference p-values must lie strictly inside (0, 1)")
    return float(np.mean(np.abs(p_hat - p) / np.minimum(p, 1.0 - p)) * 100.0)


# ---------------------------------------------------------------------------
# comparison statistics


def paired_onesided_ttest(logppd_a, logppd_b):
    """One-sided paired t-test of mean(a - b) > 0; identical vectors give
    0.5 by convention (no evidence either way)."""
    a = np.asarray(logppd_a, dtype=np.float64)
    b = np.asarray(logppd_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ConfigError("need two equal-length vectors of at least 2 units")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0:
        return 0.5
    t = d.mean() / (sd / np.sqrt(d.shape[0]))
    return float(1.0 - pc.student_t_cdf(t, d.shape[0] - 1))


def ttest_replication_average(runs_a, runs_b, draws=1000, rng=None):
    """Average of paired one-sided t-test p-values over randomly drawn
    pairs of replications (one per-unit vector from each side, with
    replacement)."""
    runs_a = [np.asarray(r, dtype=np.float64) for r in runs_a]
    runs_b = [np.asarray(r, dtype=np.float64) for r in runs_b]
    if len(runs_a) < 1 or len(runs_b) < 1:
        raise ConfigError("need at least one replication per side")
    if rng is None:
        rng = RngStream(0, 1).substream("ttest")
    ia = rng.gen.integers(0, len(runs_a), size=draws)
    ib = rng.gen.integers(0, len(runs_b), size=draws)
    ps = [paired_onesided_ttest(runs_a[j], runs_b[k]) for j, k in zip(ia, ib)]
    return float(np.mean(ps))


# ---------------------------------------------------------------------------
# convenience


_METHODS = {
    "nis": lambda store, model, i, kw: nis_ppd(store, model, i),
    "iis": lambda store, model, i, kw: iis_ppd(
        store, model, i, r_draws=kw.get("r_draws"), rng=kw.get("rng")
    ),
    "nwaic": lambda store, model, i, kw: nwaic_ppd(store, model, i),
    "iwaic": lambda store, model, i, kw: iwaic_ppd(
        store, model, i, r_draws=kw.get("r_draws"), rng=kw.get("rng")
    ),
}


def evaluate_units(store, model, method, units=None, **kw):
    """Per-unit log predictive densities under one approximation method."""
    if method not in _METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {sorted(_METHODS)}")
    if units is None:
        units = range(model.n_units)
    return [_METHODS[method](store, model, int(i), kw) for i in units]
