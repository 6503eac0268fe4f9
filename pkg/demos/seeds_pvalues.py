"""Which plates does the germination model fit badly?

The seeds data are 21 binomial plates in a 2x2 factorial with a logistic
random intercept per plate. A cross-validatory mid-p value per plate asks:
holding plate i out, how surprising is its observed count? Four
estimators answer from a single full-data run; refits give ground truth.

Estimates here use a short chain; the acceptance-grade run uses the
package default schedule.
"""

import numpy as np

from cveval import evaluators as ev
from cveval.datasets import load_seeds
from cveval.mcmc import ChainConfig, run_chains, run_cv_batched
from cveval.models.seeds import SeedsModel

data = load_seeds()
model = SeedsModel(data, r_draws=30)
midp = model.midp_evalfn()

cfg = ChainConfig(n_chains=1, n_adapt=500, n_burn=1000, n_sample=8000, thin=1, seed=3)
store = run_chains(model, cfg)
print("acceptance:", {k: round(v, 3) for k, v in store.meta["acceptance"].items()})

units = list(range(model.n_units))
est = {
    "posterior-check": [ev.posterior_check_pvalue(store, model, i, midp).value for i in units],
    "ghosting": [ev.ghosting_pvalue(store, model, i, midp, k_draws=30).value for i in units],
    "nis": [ev.is_expectation(store, model, i, midp).value for i in units],
    "iis": [ev.iis_expectation(store, model, i, midp, r_draws=30, k_draws=30).value for i in units],
}

# ground truth by refitting without each plate
actual = {}
for res in run_cv_batched(model, cfg):
    actual[res.unit] = ev.actual_cv_expectation(res.store, model, midp).value

print("\nplate  r/n     actual   iis      nis      ghosting  post-check")
for i in units:
    print(
        f"{i:>5}  {int(data.r[i]):>2}/{int(data.n[i]):<3} "
        f"{actual[i]:.3f}    {est['iis'][i]:.3f}    {est['nis'][i]:.3f}    "
        f"{est['ghosting'][i]:.3f}     {est['posterior-check'][i]:.3f}"
    )

ref = [actual[i] for i in units]
print("\naverage relative error (percent):")
for m in ("iis", "nis", "ghosting", "posterior-check"):
    print(f"  {m:<16} {ev.relative_error(est[m], ref):7.2f}")

print("\nthe posterior check is pulled toward 0.5 on every plate (the data")
print("have already been used once); ghosting fixes the latent but not the")
print("parameters; the CV-weighted estimators track the refit truth.")

flag = [i for i in units if min(actual[i], 1 - actual[i]) < 0.05]
print("plates flagged at the 0.05 level by actual CV:", flag or "none")
