"""Model-family correctness: closed-form conditionals, quadrature oracles
for stationary distributions, spectral identities for the spatial prior,
and normalization of every per-unit density.

Sampler goodness-of-fit tests run at alpha = 0.001: one-sweep conditional
draws are probability-transformed with the exact conditional cdf and
KS-tested against uniform, and long runs on low-dimensional cases are
compared against dense-grid quadrature of the exact posterior.
"""

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit
from scipy.stats import invgamma

from cveval import probcore as pc
from cveval.datasets import load_galaxy, load_lipcancer, load_seeds, SeedsData
from cveval.errors import ConfigError, DecompositionError
from cveval.mcmc import ChainConfig, effective_sample_size, run_chains
from cveval.models.car import (
    CarModel,
    CarPriors,
    CarStructure,
    car_conditional,
    car_log_joint_prior,
    car_simulate,
)
from cveval.models.mixture import MixtureModel, MixturePriors, mixture_simulate
from cveval.models.seeds import SeedsModel, SeedsPriors, seeds_simulate
from cveval.rng import RngStream

ALPHA = 0.001

GH_X, GH_W = np.polynomial.hermite.hermgauss(120)


def gauss_hermite_mean(f, mean, var):
    """E[f(X)] for X ~ Normal(mean, var) by Gauss-Hermite quadrature."""
    x = mean + np.sqrt(2.0 * var) * GH_X
    return (GH_W * f(x)).sum() / np.sqrt(np.pi)


def ks_uniform(u):
    return stats.kstest(np.asarray(u, dtype=float), "uniform").pvalue


# ===========================================================================
# mixture


class TestMixture:
    def test_integrated_density_is_component_average(self):
        # analytic integral: sum_k p_k Normal(y_i; mu_k, var_k)
        y, _ = mixture_simulate(12, RngStream(1, 1).substream("d"))
        model = MixtureModel(y, 3)
        rng = np.random.default_rng(0)
        S = 9
        mu = rng.normal(0, 3, (S, 3))
        var = rng.uniform(0.5, 2.0, (S, 3))
        p = rng.dirichlet(np.ones(3), S)
        theta = np.concatenate([mu, var, p], axis=1)
        for i in (0, 5):
            got = model.int_logpred(i, theta, None, None)
            exact = np.log(
                (p * np.exp(pc.normal_logpdf(y[i], mu, var))).sum(axis=1)
            )
            assert np.allclose(got, exact, atol=1e-12)

    def test_integrated_matches_monte_carlo_over_labels(self):
        y, _ = mixture_simulate(15, RngStream(2, 1).substream("d"))
        model = MixtureModel(y, 3)
        rng = np.random.default_rng(3)
        S, K = 6, 100_000
        mu = rng.normal(0, 3, (S, 3))
        var = rng.uniform(0.5, 2.0, (S, 3))
        p = rng.dirichlet(np.ones(3), S)
        theta = np.concatenate([mu, var, p], axis=1)
        i = 4
        exact = model.int_logpred(i, theta, None, None)
        z = model.regen_latent(i, theta, None, RngStream(4, 1).substream("r"), size=K)
        dens = np.exp(model.nonint_logpred(i, theta, z))
        mc = dens.mean(axis=1)
        se = dens.std(axis=1, ddof=1) / np.sqrt(K)
        assert np.all(np.abs(mc - np.exp(exact)) < 4 * se + 1e-12)

    def test_density_normalizes(self):
        y = np.array([1.0, 2.0])
        model = MixtureModel(y, 2)
        theta = np.array([[0.0, 3.0, 1.0, 2.0, 0.4, 0.6]])
        z = np.array([1.0])
        total = gauss_hermite_mean(
            lambda x: np.ones_like(x), 3.0, 2.0
        )  # quadrature sanity: integrates to 1
        assert total == pytest.approx(1.0, abs=1e-12)
        # integrate the conditional density of y_0 over the real line
        nodes = 3.0 + np.sqrt(2 * 2.0) * GH_X
        dens = np.exp(
            np.array(
                [model.nonint_logpred(0, theta, z, y=v)[0] for v in nodes]
            )
        )
        phi = np.exp(pc.normal_logpdf(nodes, 3.0, 2.0))
        integral = (GH_W * dens / phi).sum() / np.sqrt(np.pi)
        assert integral == pytest.approx(1.0, abs=1e-8)

    def test_single_sweep_conditional_calibration(self):
        # one sweep across many chains; each Gibbs block is checked through
        # the exact conditional cdf given the recorded conditioning state
        y, _ = mixture_simulate(
            40, RngStream(5, 1).substream("d"), means=(-4.0, 4.0), weights=(0.5, 0.5)
        )
        model = MixtureModel(y, 2)
        pri = model.priors
        B = 20_000
        rng = RngStream(6, 1).substream("sweep")
        state = model.init_state(B, rng)
        state["mu"] = np.tile(np.array([-3.5, 3.5]), (B, 1))
        state["var"] = np.tile(np.array([1.2, 0.8]), (B, 1))
        state["p"] = np.tile(np.array([0.45, 0.55]), (B, 1))
        mu0, var0, p0 = (state[k][0].copy() for k in ("mu", "var", "p"))
        model.sweep(state, rng)

        # z | mu, var, p: per-unit component frequencies vs Cat probabilities
        z = state["z"]
        for i in (0, 13, 39):
            logw = np.log(p0) + pc.normal_logpdf(y[i], mu0, var0)
            probs = np.exp(logw - pc.log_sum_exp(logw))
            counts = np.bincount(z[:, i].astype(int), minlength=2)
            chi2 = ((counts - B * probs) ** 2 / (B * probs)).sum()
            assert chi2 < stats.chi2.ppf(1 - ALPHA, df=1)

        one_hot = z[:, :, None] == np.arange(2)[None, None, :]
        counts = one_hot.sum(axis=1)  # (B, 2)

        # p | z ~ Dirichlet: per-component marginal Beta
        alpha = pri.dir_alpha + counts
        u = stats.beta.cdf(state["p"][:, 0], alpha[:, 0], alpha[:, 1])
        assert ks_uniform(u) > ALPHA

        # mu_k | z, var_old conjugate normal
        sum_y = (one_hot * y[None, :, None]).sum(axis=1)
        for k in range(2):
            prec = counts[:, k] / var0[k] + 1.0 / pri.mu_var
            mean = (sum_y[:, k] / var0[k] + pri.mu_mean / pri.mu_var) / prec
            u = stats.norm.cdf(state["mu"][:, k], mean, 1.0 / np.sqrt(prec))
            assert ks_uniform(u) > ALPHA

        # var_k | z, mu_new conjugate inverse-gamma
        for k in range(2):
            resid = (y[None, :] - state["mu"][:, k, None]) ** 2
            ssr = (one_hot[:, :, k] * resid).sum(axis=1)
            u = invgamma.cdf(
                state["var"][:, k],
                pri.var_shape + counts[:, k] / 2.0,
                scale=pri.var_scale + ssr / 2.0,
            )
            assert ks_uniform(u) > ALPHA

    def test_stationary_distribution_vs_quadrature(self):
        # K = 1 collapses to a two-parameter conjugate-style model whose
        # posterior is computable on a dense grid
        rng = np.random.default_rng(12)
        y = rng.normal(1.5, 2.3, 25)
        model = MixtureModel(y, 1)
        n = y.size
        pri = model.priors

        mu_g = np.linspace(-1.0, 4.0, 501)[:, None]
        v_g = np.linspace(1.0, 30.0, 800)[None, :]
        ss, sy = float((y**2).sum()), float(y.sum())
        loglik = -n / 2 * np.log(2 * np.pi * v_g) - (
            ss - 2 * mu_g * sy + n * mu_g**2
        ) / (2 * v_g)
        logpost = (
            loglik
            + pc.normal_logpdf(mu_g, pri.mu_mean, pri.mu_var)
            + pc.invgamma_logpdf(v_g, pri.var_shape, pri.var_scale)
        )
        w = np.exp(logpost - logpost.max())
        w /= w.sum()
        exact_mu = float((w * mu_g).sum())
        exact_var = float((w * v_g).sum())

        cfg = ChainConfig(n_chains=2, n_adapt=100, n_burn=500, n_sample=15000, thin=1, seed=9)
        store = run_chains(model, cfg, rng=RngStream(9, 1).substream("fit"))
        got_mu = store.theta[:, 0]
        got_var = store.theta[:, 1]
        for got, exact in ((got_mu, exact_mu), (got_var, exact_var)):
            ess = effective_sample_size(store.by_chain(got))
            se = got.std(ddof=1) / np.sqrt(max(ess, 10.0))
            assert abs(got.mean() - exact) < 5 * se + 1e-3

    def test_occupancy_constraint_holds_each_sweep(self):
        y, _ = mixture_simulate(
            30, RngStream(7, 1).substream("d"), means=(-5.0, 0.0, 5.0), weights=(1 / 3,) * 3
        )
        model = MixtureModel(y, 3)
        rng = RngStream(8, 1).substream("occ")
        state = model.init_state(8, rng)
        for _ in range(200):
            model.sweep(state, rng, adapt=True)
            present = (state["z"][:, :, None] == np.arange(3)).any(axis=1)
            assert present.all()

    def test_component_count_validation(self):
        with pytest.raises(ConfigError):
            MixtureModel(np.arange(5.0), 6)
        with pytest.raises(ConfigError):
            MixtureModel(np.arange(5.0), 0)


# ===========================================================================
# spatial prior: spectra, conditionals, determinants


def small_structure():
    # 7 units, irregular graph and uneven expected counts
    neighbors = [[1, 2], [0, 2, 3], [0, 1], [1, 4, 5], [3, 5], [3, 4, 6], [5]]
    rng = np.random.default_rng(21)
    E = rng.uniform(0.5, 3.0, 7)
    x = rng.uniform(0.0, 1.0, 7)
    return CarStructure(E, x, neighbors)


class TestSpatialStructure:
    def test_path_graph_spectrum_closed_form(self):
        st = CarStructure(np.ones(3), np.zeros(3), [[1], [0, 2], [1]])
        got = np.sort(st.adj_eigenvalues)
        assert np.allclose(got, [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-10)

    def test_scaled_adjacency_is_similar_to_01_adjacency(self):
        d = load_lipcancer()
        st = CarStructure.from_data(d)
        root = np.sqrt(st.expected)
        a01 = d.adjacency_matrix()
        # algebraic identity: asym = D^{1/2} A D^{1/2}
        assert np.allclose(st.asym, a01 * np.outer(root, root), atol=1e-12)
        # C = D^{-1} asym is similar to A, so the spectra agree
        c_eigs = np.sort(np.linalg.eigvals(st.c_matrix).real)
        assert np.allclose(c_eigs, np.sort(st.adj_eigenvalues), atol=1e-8)

    def test_logdet_eigen_identity(self):
        st = CarStructure.from_data(load_lipcancer())
        lo, hi = st.phi_support
        for phi in (lo * 0.9, 0.0, hi * 0.5, hi * 0.95):
            q = np.diag(st.expected) - phi * st.asym
            sign, logdet = np.linalg.slogdet(q)
            assert sign > 0
            ours = np.log(st.expected).sum() + np.log1p(-phi * st.adj_eigenvalues).sum()
            assert ours == pytest.approx(logdet, abs=1e-10)

    def test_phi_support_is_positive_definite_boundary(self):
        st = CarStructure.from_data(load_lipcancer())
        lo, hi = st.phi_support
        eps = 1e-4 * (hi - lo)
        for phi in (lo + eps, hi - eps):
            pc.cholesky(np.diag(st.expected) - phi * st.asym)  # must succeed
        for phi in (lo - 50 * eps, hi + 50 * eps):
            with pytest.raises(DecompositionError):
                pc.cholesky(np.diag(st.expected) - phi * st.asym)

    def test_coloring_is_proper(self):
        st = CarStructure.from_data(load_lipcancer())
        color_of = np.empty(st.n, dtype=int)
        for c, group in enumerate(st.colors):
            color_of[np.asarray(group)] = c
        for i, nbrs in enumerate(st.neighbors):
            for j in nbrs:
                assert color_of[i] != color_of[j]
        assert sorted(int(i) for g in st.colors for i in g) == list(range(st.n))

    def test_conditional_matches_schur_complement(self):
        st = small_structure()
        rng = np.random.default_rng(31)
        s = rng.normal(0, 1, 7)
        theta = {"alpha": 0.3, "beta": -0.6, "tau2": 0.7, "phi": 0.11}
        lo, hi = st.phi_support
        assert lo < theta["phi"] < hi
        for variant in ("full", "spatial", "linear", "exchangeable"):
            has_beta = variant in ("full", "linear")
            spatial = variant in ("full", "spatial")
            mu = theta["alpha"] + (theta["beta"] * st.x if has_beta else 0.0)
            if spatial:
                prec = (np.diag(st.expected) - theta["phi"] * st.asym) / theta["tau2"]
            else:
                prec = np.eye(7) / theta["tau2"]
            for i in range(7):
                idx = [j for j in range(7) if j != i]
                cond_var = 1.0 / prec[i, i]
                cond_mean = (
                    (mu[i] if np.ndim(mu) else mu)
                    - cond_var * prec[i, idx] @ (s[idx] - (mu[idx] if np.ndim(mu) else mu))
                )
                m, v = car_conditional(
                    i, s[None, :], {k: np.atleast_1d(v_) for k, v_ in theta.items()}, st, variant
                )
                assert m[0] == pytest.approx(float(cond_mean), abs=1e-8)
                assert v[0] == pytest.approx(float(cond_var), abs=1e-8)

    def test_joint_prior_matches_dense_gaussian(self):
        st = small_structure()
        rng = np.random.default_rng(33)
        s = rng.normal(0, 1, (4, 7))
        theta = {
            "alpha": np.full(4, 0.2),
            "beta": np.full(4, -0.4),
            "tau2": np.full(4, 0.5),
            "phi": np.full(4, 0.1),
        }
        for variant in ("full", "spatial", "linear", "exchangeable"):
            has_beta = variant in ("full", "linear")
            spatial = variant in ("full", "spatial")
            mu = theta["alpha"][:, None] + (
                theta["beta"][:, None] * st.x if has_beta else 0.0
            )
            mu = np.broadcast_to(mu, (4, 7))
            if spatial:
                prec = (np.diag(st.expected) - theta["phi"][0] * st.asym) / theta["tau2"][0]
            else:
                prec = np.eye(7) / theta["tau2"][0]
            got = car_log_joint_prior(s, theta, st, variant)
            for r in range(4):
                exact = pc.mvn_logpdf(s[r], mu[r], prec=prec)
                assert got[r] == pytest.approx(float(exact), abs=1e-8)

    def test_joint_prior_rejects_phi_outside_support(self):
        st = small_structure()
        lo, hi = st.phi_support
        theta = {
            "alpha": np.zeros(1),
            "beta": np.zeros(1),
            "tau2": np.ones(1),
            "phi": np.array([hi * 1.5]),
        }
        with pytest.raises(ValueError):
            car_log_joint_prior(np.zeros((1, 7)), theta, st, "full")


# ===========================================================================
# disease-mapping sampler


class TestCarSampler:
    def make_model(self):
        d = load_lipcancer()
        st = CarStructure.from_data(d)
        return CarModel(d.y, st, variant="full")

    def test_single_sweep_conditional_calibration(self):
        model = self.make_model()
        st = model.structure
        pri = model.priors
        B = 20_000
        rng = RngStream(41, 1).substream("sweep")
        state = model.init_state(B, rng)
        beta_prev = state["beta"].copy()
        tau2_prev = state["tau2"].copy()
        phi_prev = state["phi"].copy()
        assert np.ptp(phi_prev) == 0.0 and np.ptp(tau2_prev) == 0.0
        model.sweep(state, rng)
        phi0, tau20 = phi_prev[0], tau2_prev[0]
        q = np.diag(st.expected) - phi0 * st.asym
        one = np.ones(st.n)

        # alpha | s_new, beta_prev, tau2_prev, phi_prev is conjugate normal
        d = state["s"] - beta_prev[:, None] * st.x
        qd = d @ q
        prec = (one @ q @ one) / tau20 + 1.0 / pri.coef_sd**2
        mean = (qd @ one) / tau20 / prec
        u = stats.norm.cdf(state["alpha"], mean, 1.0 / np.sqrt(prec))
        assert ks_uniform(u) > ALPHA

        # tau2 | s_new, alpha_new, beta_new, phi_prev is inverse-gamma
        resid = state["s"] - (state["alpha"][:, None] + state["beta"][:, None] * st.x)
        qf = np.einsum("bi,ij,bj->b", resid, q, resid)
        u = invgamma.cdf(
            state["tau2"], pri.tau2_shape + st.n / 2.0, scale=pri.tau2_scale + qf / 2.0
        )
        assert ks_uniform(u) > ALPHA

    def test_regenerated_latents_have_conditional_moments(self):
        model = self.make_model()
        rng = np.random.default_rng(43)
        S, K = 6, 60_000
        theta = np.column_stack(
            [
                rng.normal(0, 0.2, S),
                rng.normal(0.3, 0.1, S),
                rng.uniform(0.2, 0.5, S),
                rng.uniform(0.0, 0.15, S),
            ]
        )
        latent = rng.normal(0, 0.5, (S, model.n_units))
        i = 20
        draws = model.regen_latent(i, theta, latent, RngStream(44, 1).substream("r"), size=K)
        tv = model.theta_view(theta)
        m, v = car_conditional(
            i,
            latent,
            {"alpha": tv.alpha, "beta": tv.beta, "tau2": tv.tau2, "phi": tv.phi},
            model.structure,
            "full",
        )
        se_mean = np.sqrt(v / K)
        assert np.all(np.abs(draws.mean(axis=1) - m) < 4 * se_mean)
        ratio = draws.var(axis=1, ddof=1) / v
        assert np.all(np.abs(ratio - 1) < 5 * np.sqrt(2.0 / K))

    def test_count_density_normalizes_and_midp_by_hand(self):
        model = self.make_model()
        theta = np.array([[0.1, 0.2, 0.3, 0.05]])
        s_i = np.array([0.4])
        i = 7
        grid = np.arange(0, 400)
        ld = np.array([model.nonint_logpred(i, theta, s_i, y=v)[0] for v in grid])
        assert np.exp(ld).sum() == pytest.approx(1.0, abs=1e-10)
        rate = model.structure.expected[i] * np.exp(0.4)
        y_obs = int(model.y[i])
        pmf = np.exp(pc.poisson_logpmf(grid, rate))
        exact = pmf[grid > y_obs].sum() + 0.5 * pmf[y_obs]
        got = model.eval_midp(i, theta, s_i)
        assert got[0] == pytest.approx(exact, abs=1e-12)

    def test_integrated_density_matches_quadrature(self):
        model = self.make_model()
        rng = np.random.default_rng(47)
        S = 12
        theta = np.column_stack(
            [
                rng.normal(0, 0.2, S),
                rng.normal(0.3, 0.1, S),
                rng.uniform(0.2, 0.5, S),
                rng.uniform(0.0, 0.15, S),
            ]
        )
        latent = rng.normal(0, 0.5, (S, model.n_units))
        i = 33
        tv = model.theta_view(theta)
        m, v = car_conditional(
            i,
            latent,
            {"alpha": tv.alpha, "beta": tv.beta, "tau2": tv.tau2, "phi": tv.phi},
            model.structure,
            "full",
        )
        E_i = model.structure.expected[i]
        y_i = model.y[i]
        exact = np.array(
            [
                gauss_hermite_mean(
                    lambda x: np.exp(pc.poisson_logpmf(y_i, E_i * np.exp(x))), m[r], v[r]
                )
                for r in range(S)
            ]
        )
        got = model.int_logpred(i, theta, latent, RngStream(48, 1).substream("q"), r_draws=40_000)
        assert np.allclose(np.exp(got), exact, rtol=0.02)

    def test_all_variants_run_and_differ(self):
        d = load_lipcancer()
        st = CarStructure.from_data(d)
        cfg = ChainConfig(n_chains=1, n_adapt=100, n_burn=100, n_sample=600, thin=1)
        means = {}
        for variant in ("full", "spatial", "linear", "exchangeable"):
            model = CarModel(d.y, st, variant=variant)
            store = run_chains(model, cfg, rng=RngStream(51, 1).substream(variant))
            assert store.theta.shape[1] == len(model.theta_names)
            means[variant] = store.theta[:, 0].mean()
        assert len({round(v, 6) for v in means.values()}) == 4

    def test_simulator_counts_and_support_check(self):
        st = CarStructure.from_data(load_lipcancer())
        y, s = car_simulate(RngStream(52, 1).substream("sim"), st, "full")
        assert y.shape == (56,) and np.all(y >= 0)
        with pytest.raises(ConfigError):
            car_simulate(RngStream(52, 1).substream("x"), st, "full", phi=5.0)


# ===========================================================================
# random-intercept logistic sampler


class TestSeedsSampler:
    def make_model(self, **kw):
        return SeedsModel(load_seeds(), **kw)

    def test_single_sweep_sigma2_calibration(self):
        model = self.make_model()
        pri = model.priors
        B = 20_000
        rng = RngStream(61, 1).substream("sweep")
        state = model.init_state(B, rng)
        model.sweep(state, rng)
        b = state["b"]
        u = invgamma.cdf(
            state["sigma2"],
            pri.sigma2_shape + model.n_units / 2.0,
            scale=pri.sigma2_scale + (b * b).sum(axis=1) / 2.0,
        )
        assert ks_uniform(u) > ALPHA

    def test_stationary_distribution_vs_quadrature(self):
        # one plate, intercept-only information: the exact posterior over
        # (a0, b, sigma2) is integrable on a dense grid
        data = SeedsData(
            r=np.array([7]), n=np.array([10]), x1=np.array([0]), x2=np.array([0])
        )
        priors = SeedsPriors(coef_var=4.0, sigma2_shape=3.0, sigma2_scale=3.0)
        model = SeedsModel(data, priors=priors)

        a_g = np.linspace(-4, 4, 161)[:, None, None]
        b_g = np.linspace(-4, 4, 161)[None, :, None]
        s_g = np.linspace(0.02, 12.0, 220)[None, None, :]
        eta = a_g + b_g
        loglik = 7 * eta - 10 * np.logaddexp(0, eta)
        logpost = (
            loglik
            + pc.normal_logpdf(a_g, 0.0, 4.0)
            + pc.normal_logpdf(b_g, 0.0, s_g)
            + pc.invgamma_logpdf(s_g, 3.0, 3.0)
        )
        w = np.exp(logpost - logpost.max())
        w /= w.sum()
        exact = {
            "a0": float((w * a_g).sum()),
            "b": float((w * b_g).sum()),
            "sigma2": float((w * s_g).sum()),
        }

        cfg = ChainConfig(n_chains=4, n_adapt=500, n_burn=1000, n_sample=12000, thin=1, seed=62)
        store = run_chains(model, cfg, rng=RngStream(62, 1).substream("fit"))
        cols = {"a0": store.theta[:, 0], "sigma2": store.theta[:, 4], "b": store.latent[:, 0]}
        for name, col in cols.items():
            ess = effective_sample_size(store.by_chain(col))
            se = col.std(ddof=1) / np.sqrt(max(ess, 10.0))
            assert abs(col.mean() - exact[name]) < 5 * se + 2e-2, name
        # coefficients with no data support keep their prior
        for k in (1, 2, 3):
            col = store.theta[:, k]
            ess = effective_sample_size(store.by_chain(col))
            se = col.std(ddof=1) / np.sqrt(max(ess, 10.0))
            assert abs(col.mean()) < 5 * se
            assert col.var(ddof=1) == pytest.approx(4.0, rel=0.2)

    def test_count_density_normalizes_and_midp_by_hand(self):
        model = self.make_model()
        theta = np.array([[-0.5, 0.1, 1.3, -0.8, 0.1]])
        b_i = np.array([0.3])
        i = 4
        n_i = int(model.n[i])
        grid = np.arange(0, n_i + 1)
        ld = np.array([model.nonint_logpred(i, theta, b_i, y=v)[0] for v in grid])
        assert np.exp(ld).sum() == pytest.approx(1.0, abs=1e-12)
        eta = float(model.design[i] @ theta[0, :4] + 0.3)
        pmf = np.exp(pc.binomial_logpmf(grid, n_i, expit(eta)))
        r_obs = int(model.r[i])
        exact = pmf[grid > r_obs].sum() + 0.5 * pmf[r_obs]
        assert model.eval_midp(i, theta, b_i)[0] == pytest.approx(exact, abs=1e-12)

    def test_integrated_density_matches_quadrature(self):
        model = self.make_model()
        rng = np.random.default_rng(63)
        S = 10
        theta = np.column_stack(
            [
                rng.normal(-0.5, 0.2, S),
                rng.normal(0.1, 0.1, S),
                rng.normal(1.3, 0.2, S),
                rng.normal(-0.8, 0.2, S),
                rng.uniform(0.05, 0.4, S),
            ]
        )
        i = 11
        eta0 = theta[:, :4] @ model.design[i]
        n_i, r_i = int(model.n[i]), int(model.r[i])
        exact = np.array(
            [
                gauss_hermite_mean(
                    lambda b: np.exp(pc.binomial_logpmf(r_i, n_i, expit(eta0[r] + b))),
                    0.0,
                    theta[r, 4],
                )
                for r in range(S)
            ]
        )
        got = model.int_logpred(
            i, theta, None, RngStream(64, 1).substream("q"), r_draws=40_000
        )
        assert np.allclose(np.exp(got), exact, rtol=0.02)

    def test_simulator_shapes(self):
        d = load_seeds()
        r, b = seeds_simulate(RngStream(65, 1).substream("sim"), d.x1, d.x2, d.n)
        assert r.shape == (21,) and b.shape == (21,)
        assert np.all(r >= 0) and np.all(r <= d.n)
