# region -----External Imports-----
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
# endregion

# region -----Internal Imports-----
from ..exceptions import InvalidArgumentError, PositiveDefinitenessError
from ..features import feature_preset, tabular_features, weighted_projection
from ..fixed_points import (
    analytic_operator,
    approx_error,
    bias_constant,
    emphatic_f,
    emphatic_weights,
    etd0_fixed_point,
    etd_lambda_fixed_point,
    finite_b_fixed_point,
    finite_b_operator,
    lipschitz_constant,
    monotonicity_constant,
    rate_exponent,
    select_b,
    theory_constants,
    variance_regime,
)
from ..mdp import baird_mdp, induced_chain, stationary_distribution, value_function
from ..models import BSelectorParams, OperatorModel
# endregion

LAMBDAS = [0.0, 0.25, 0.5, 0.75, 1.0]


@pytest.fixture
def baird():
    mdp, target, behavior = baird_mdp(0.9, 1.0 / 7.0)
    chain = induced_chain(mdp, target)
    d_mu = stationary_distribution(induced_chain(mdp, behavior).p_pi)
    return {
        "gamma": mdp.gamma,
        "p_pi": chain.p_pi,
        "r_pi": chain.r_pi,
        "d_mu": d_mu,
        "f": emphatic_f(d_mu, chain.p_pi, mdp.gamma),
        "v_pi": value_function(chain, mdp.gamma),
    }


def _residual_ok(model: OperatorModel, theta: np.ndarray) -> bool:
    residual = np.linalg.norm(analytic_operator(model, theta))
    return residual <= 1e-10 * (1.0 + np.linalg.norm(model.c_vector))


class TestEmphaticWeights:

    def test_mass_identity(self, baird):
        assert baird["f"].sum() == pytest.approx(1.0 / (1.0 - baird["gamma"]), rel=1e-10)

    def test_gamma_zero_returns_d_mu(self, baird):
        assert_allclose(emphatic_f(baird["d_mu"], baird["p_pi"], 0.0), baird["d_mu"])

    def test_m_blends_d_and_f(self, baird):
        weights = emphatic_weights(baird["d_mu"], baird["p_pi"], baird["gamma"], 0.25)

        assert_allclose(weights.m, 0.25 * baird["d_mu"] + 0.75 * weights.f)

    def test_gamma_out_of_range(self, baird):
        with pytest.raises(InvalidArgumentError, match="gamma"):
            emphatic_f(baird["d_mu"], baird["p_pi"], 1.0)


class TestFixedPoints:

    @pytest.mark.parametrize("name", ["phi1", "phi2", "phi3"])
    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_residuals(self, baird, name, lam):
        features = feature_preset(name)

        model, theta = etd_lambda_fixed_point(
            features, baird["f"], baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], lam
        )

        assert _residual_ok(model, theta)
        assert_allclose(analytic_operator(model, theta), 0.0, atol=1e-8)

    @pytest.mark.parametrize("name", ["phi1", "phi2", "phi3"])
    def test_lambda_one_is_the_d_mu_projection(self, baird, name):
        features = feature_preset(name)

        _, theta = etd_lambda_fixed_point(
            features, baird["f"], baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], 1.0
        )

        assert_allclose(theta, weighted_projection(baird["v_pi"], features, baird["d_mu"]), rtol=1e-9, atol=1e-9)

    def test_lambda_zero_matches_etd0(self, baird):
        features = feature_preset("phi2")

        _, theta0 = etd0_fixed_point(features, baird["f"], baird["p_pi"], baird["r_pi"], baird["gamma"])
        _, theta = etd_lambda_fixed_point(
            features, baird["f"], baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], 0.0
        )

        assert_allclose(theta, theta0, rtol=1e-10)

    def test_tabular_oracle(self, baird):
        features = tabular_features(7)
        args = (features, baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"])

        _, theta = etd0_fixed_point(features, baird["f"], baird["p_pi"], baird["r_pi"], baird["gamma"])
        assert_allclose(theta, baird["v_pi"], atol=1e-8)
        for lam in LAMBDAS:
            _, theta = etd_lambda_fixed_point(
                features, baird["f"], baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], lam
            )
            assert_allclose(theta, baird["v_pi"], atol=1e-8)
            for b in (0, 1, 4, 16):
                assert_allclose(finite_b_fixed_point(*args, lam, b), baird["v_pi"], atol=1e-8)

    def test_etd0_fixed_point_on_phi1(self, baird):
        features = feature_preset("phi1")
        phi = features.phi[:, 0]
        f = baird["f"]
        expected = (f * phi) @ baird["r_pi"] / ((f * phi) @ (phi - baird["gamma"] * baird["p_pi"] @ phi))

        _, theta = etd0_fixed_point(features, f, baird["p_pi"], baird["r_pi"], baird["gamma"])

        assert theta[0] == pytest.approx(expected, rel=1e-10)


class TestFiniteB:

    def test_b_zero_is_off_policy_td(self, baird):
        features = feature_preset("phi2")
        phi, d = features.phi, baird["d_mu"]

        model = finite_b_operator(features, d, baird["p_pi"], baird["r_pi"], baird["gamma"], 0.0, 0)

        assert_allclose(model.a_matrix, phi.T @ np.diag(d) @ (phi - baird["gamma"] * baird["p_pi"] @ phi))
        assert_allclose(model.c_vector, phi.T @ np.diag(d) @ baird["r_pi"])

    def test_lambda_zero_uses_only_the_followon_weights(self, baird):
        features = feature_preset("phi3")
        d, p = baird["d_mu"], baird["p_pi"]
        f_bar = d.copy()
        for _ in range(5):
            f_bar = d + baird["gamma"] * p.T @ f_bar
        weighted = features.phi.T @ np.diag(f_bar)

        model = finite_b_operator(features, d, p, baird["r_pi"], baird["gamma"], 0.0, 5)

        assert_allclose(model.a_matrix, weighted @ (features.phi - baird["gamma"] * p @ features.phi))
        assert_allclose(model.c_vector, weighted @ baird["r_pi"])

    def test_large_b_approaches_etd_lambda(self, baird):
        features = feature_preset("phi2")
        args = (features, baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"])

        _, theta_lambda = etd_lambda_fixed_point(
            features, baird["f"], baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], 0.5
        )

        assert_allclose(finite_b_fixed_point(*args, 0.5, 4000), theta_lambda, rtol=1e-6, atol=1e-6)

    def test_bias_decays_geometrically(self, baird):
        features = feature_preset("phi1")
        args = (features, baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"])
        _, theta_star = etd0_fixed_point(features, baird["f"], baird["p_pi"], baird["r_pi"], baird["gamma"])
        b_values = np.arange(4, 65)

        distances = np.array([np.linalg.norm(finite_b_fixed_point(*args, 0.0, b) - theta_star) for b in b_values])
        slope, _ = np.polyfit(b_values, np.log(distances), 1)

        assert np.all(np.diff(distances) < 0)
        assert math.exp(slope) <= max(baird["gamma"], 0.99) + 0.05

    def test_negative_b(self, baird):
        with pytest.raises(InvalidArgumentError, match="nonnegative"):
            finite_b_operator(feature_preset("phi1"), baird["d_mu"], baird["p_pi"], baird["r_pi"], baird["gamma"], 0.0, -1)


class TestTheoryConstants:

    def test_monotonicity_of_scaled_identity(self):
        assert monotonicity_constant(2.0 * np.eye(3)) == pytest.approx(2.0)

    def test_monotonicity_violation(self):
        with pytest.raises(PositiveDefinitenessError) as e:
            monotonicity_constant(np.array([[1.0, 4.0], [0.0, 1.0]]))

        assert e.value.mu == pytest.approx(-1.0)

    def test_lipschitz(self):
        assert lipschitz_constant(np.eye(3)) == pytest.approx(1.0)
        assert lipschitz_constant(np.diag([3.0, 1.0])) == pytest.approx(3.0)

    def test_lipschitz_matches_power_iteration(self):
        a = np.random.default_rng(7).normal(size=(5, 5))
        v = np.ones(5)
        for _ in range(5000):
            v = a.T @ (a @ v)
            v /= np.linalg.norm(v)

        assert lipschitz_constant(a) == pytest.approx(np.linalg.norm(a @ v), rel=1e-9)

    @pytest.mark.parametrize("name", ["phi1", "phi2", "phi3"])
    def test_baird_constants(self, baird, name):
        features = feature_preset(name)
        model, theta = etd0_fixed_point(features, baird["f"], baird["p_pi"], baird["r_pi"], baird["gamma"])

        constants = theory_constants(model, features, theta, baird["v_pi"])

        assert 0 < constants.mu <= constants.lip
        assert constants.t0 == pytest.approx(8 * constants.lip ** 2 / constants.mu ** 2)
        assert constants.eps_approx > 0

    def test_approx_error_is_zero_when_representable(self):
        features = tabular_features(3)
        v = np.array([1.0, 2.0, 3.0])

        assert approx_error(features, v, v) == 0.0

    def test_bias_constant(self):
        f = np.array([2.0, 3.0])

        assert bias_constant(1.0, 0.5, 0.75, 2.0, f) == pytest.approx(1.5 * (8.0 + 1.0 + 5.0))

    def test_bias_constant_undefined_at_chi_equal_gamma(self):
        with pytest.raises(InvalidArgumentError, match="chi == gamma"):
            bias_constant(1.0, 0.9, 0.9, 1.0, np.ones(2))


class TestSelectB:

    def test_variance_branch_in_the_bounded_regime(self):
        params = BSelectorParams(xi=0.5, rho_max=1.0)

        assert select_b(params, gamma=0.5, T=1024, mu=1.0, b_phi=1.0, variant="etd0") == 10

    def test_lambda_variant(self):
        params = BSelectorParams(xi=0.5, rho_max=2.0)

        assert select_b(params, gamma=0.5, T=1024, mu=1.0, b_phi=1.0, variant="etd_lambda") == 5

    def test_smaller_bias_branch_is_ignored(self):
        params = BSelectorParams(xi=0.5, rho_max=1.0, c_b=0.1)

        assert select_b(params, gamma=0.5, T=1024, mu=1.0, b_phi=1.0, variant="etd0") == 10

    def test_bias_branch_can_dominate(self):
        params = BSelectorParams(xi=0.5, rho_max=1.0, c_b=100.0)

        b = select_b(params, gamma=0.5, T=4, mu=1.0, b_phi=1.0, variant="etd0")

        assert b == math.ceil(math.log(500.0) / math.log(2.0))

    def test_doubling_T_grows_b_logarithmically(self):
        params = BSelectorParams(xi=0.5, rho_max=1.0)

        small = select_b(params, gamma=0.5, T=1024, mu=1.0, b_phi=1.0, variant="etd0")
        large = select_b(params, gamma=0.5, T=2048, mu=1.0, b_phi=1.0, variant="etd0")

        assert 0 <= large - small <= 1

    def test_floor_at_one(self):
        params = BSelectorParams(xi=0.01, rho_max=1.0)

        assert select_b(params, gamma=0.5, T=2, mu=1.0, b_phi=1.0, variant="etd0") == 1

    def test_invalid_xi(self):
        with pytest.raises(InvalidArgumentError, match="xi"):
            BSelectorParams(xi=1.0, rho_max=1.0)

    def test_invalid_c_b(self):
        with pytest.raises(InvalidArgumentError, match="c_b"):
            BSelectorParams(xi=0.5, rho_max=1.0, c_b=0.0)

    def test_T_too_small(self):
        with pytest.raises(InvalidArgumentError, match="T"):
            select_b(BSelectorParams(xi=0.5, rho_max=1.0), gamma=0.5, T=1, mu=1.0, b_phi=1.0, variant="etd0")


class TestRates:

    def test_rate_exponent_bounded_regime(self):
        assert rate_exponent(0.5, 2.0, 0.5, "etd0") == 1.0

    def test_rate_exponent_exponential_regime(self):
        assert rate_exponent(1.0, 4.0, 0.5, "etd0") == pytest.approx(1.0 / 3.0)

    def test_rate_exponent_lambda_variant(self):
        assert rate_exponent(0.5, 4.0, 0.5, "etd_lambda") == pytest.approx(1.0 / 3.0)

    @pytest.mark.parametrize("gamma, rho_max, regime", [
        (0.5, 2.0, "bounded"), (0.5, 4.0, "linear"), (0.99, 6.3, "exponential"),
    ])
    def test_variance_regime(self, gamma, rho_max, regime):
        assert variance_regime(gamma, rho_max) == regime
