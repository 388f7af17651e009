# region -----External Imports-----
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
# endregion

# region -----Internal Imports-----
from ..exceptions import InvalidArgumentError, RankDeficiencyError
from ..experiments import presets, services
from ..experiments.schemas import ExperimentConfig, RecordPoint, RunRecord
from ..experiments.settings_file import build_config, read_settings_file
from ..features import default_radius
from ..fixed_points import analytic_operator, finite_b_operator, monotonicity_constant
from ..models import AlgoConfig, FeatureMap, FiniteMdp, Policy
from ..storage import load_features_csv, load_mdp_file, write_curves
# endregion


def _record(seed, errors, diverged=False, start=0):
    points = [RecordPoint(iteration=start + i, transitions=start + i, error=e) for i, e in enumerate(errors)]
    return RunRecord(seed=seed, algo="per-etd0", b=4, lam=0.0, points=points, diverged=diverged)


class TestAggregation:

    def test_mean_and_sample_std(self):
        curve = services.aggregate_trials([_record(0, [1.0, 2.0]), _record(1, [3.0, 6.0])])

        assert [p.mean for p in curve] == [2.0, 4.0]
        assert curve[1].std == pytest.approx(math.sqrt(8.0))
        assert curve[0].n == 2

    def test_single_trial_has_zero_std(self):
        curve = services.aggregate_trials([_record(0, [1.0, 2.0])])

        assert curve[0].std == 0.0

    def test_diverged_trials_drop_out(self):
        curve = services.aggregate_trials([_record(0, [1.0, 2.0, 3.0]), _record(1, [5.0, 1e13], diverged=True)])

        assert [p.mean for p in curve] == [3.0, 2.0, 3.0]
        assert [p.n_diverged for p in curve] == [0, 1, 1]

    def test_all_diverged_gives_empty_points(self):
        curve = services.aggregate_trials([_record(0, [1.0, 1e13], diverged=True)])

        assert curve[1].mean is None and curve[1].std is None
        assert curve[1].n == 0

    def test_divergence_between_strides_keeps_the_grid(self):
        alive = RunRecord(seed=0, algo="etd0", b=0, lam=0.0, points=[
            RecordPoint(iteration=i, transitions=i, error=e) for i, e in zip((0, 10, 20, 30), (4.0, 3.0, 2.0, 1.0))
        ])
        dead = RunRecord(seed=1, algo="etd0", b=0, lam=0.0, diverged=True, points=[
            RecordPoint(iteration=i, transitions=i, error=e) for i, e in zip((0, 10, 17), (6.0, 5.0, 1e13))
        ])

        curve = services.aggregate_trials([alive, dead])

        assert [p.iteration for p in curve] == [0, 10, 20, 30]
        assert [p.mean for p in curve] == [5.0, 4.0, 2.0, 1.0]
        assert [p.n_diverged for p in curve] == [0, 0, 1, 1]

    def test_all_diverged_off_the_grid(self):
        first = _record(0, [1.0, 2.0, 1e13], diverged=True)
        second = RunRecord(seed=1, algo="per-etd0", b=4, lam=0.0, diverged=True, points=[
            RecordPoint(iteration=0, transitions=0, error=1.0), RecordPoint(iteration=1, transitions=1, error=1e13),
        ])

        curve = services.aggregate_trials([first, second])

        assert [p.n for p in curve] == [2, 1, 0]
        assert curve[2].mean is None

    def test_truncated_record_must_have_diverged(self):
        with pytest.raises(InvalidArgumentError, match="truncated"):
            services.aggregate_trials([_record(0, [1.0, 2.0, 3.0]), _record(1, [1.0])])

    def test_grids_must_match(self):
        with pytest.raises(InvalidArgumentError, match="grid"):
            services.aggregate_trials([_record(0, [1.0, 2.0]), _record(1, [1.0, 2.0], start=5)])

    def test_no_records(self):
        with pytest.raises(InvalidArgumentError):
            services.aggregate_trials([])

    def test_iterations_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            RunRecord(seed=0, algo="td0", b=0, lam=0.0, points=[
                RecordPoint(iteration=2, transitions=2, error=1.0),
                RecordPoint(iteration=2, transitions=2, error=1.0),
            ])


class TestBiasVariance:

    def test_decomposition(self):
        summary = services.summarize_bias_variance(4, np.array([[1.0, 0.0], [3.0, 0.0]]), np.zeros(2))

        assert summary.bias == pytest.approx(2.0)
        assert summary.variance == pytest.approx(1.0)
        assert summary.mse == pytest.approx(summary.bias ** 2 + summary.variance)
        assert not summary.flagged

    def test_identical_seeds_have_zero_variance(self):
        summary = services.summarize_bias_variance(2, np.tile([1.0, 2.0], (5, 1)), np.zeros(2))

        assert summary.variance == pytest.approx(0.0)
        assert summary.bias == pytest.approx(math.sqrt(5.0))

    def test_centered_seeds_have_zero_bias(self):
        summary = services.summarize_bias_variance(2, np.array([[1.0], [-1.0]]), np.zeros(1))

        assert summary.bias == pytest.approx(0.0)
        assert summary.variance == pytest.approx(1.0)

    def test_everything_diverged(self):
        summary = services.summarize_bias_variance(8, np.empty((0, 3)), np.zeros(3), n_diverged=4)

        assert summary.flagged
        assert summary.bias is None
        assert (summary.n_seeds, summary.n_diverged) == (4, 4)

    def test_sweep_on_tabular_features(self):
        cfg = ExperimentConfig(features="tabular", T=20, n_seeds=3)

        summaries = services.bias_variance_by_b(cfg, [2, 4])

        assert [s.b for s in summaries] == [2, 4]
        for summary in summaries:
            assert summary.n_seeds == 3
            assert summary.variance >= 0
            assert summary.mse == pytest.approx(summary.bias ** 2 + summary.variance, rel=1e-9)

    def test_sweep_needs_a_periodic_algorithm(self):
        with pytest.raises(InvalidArgumentError, match="periodic"):
            services.bias_variance_by_b(ExperimentConfig(algo="etd0"), [2])


class TestTrialPlanning:

    @pytest.mark.parametrize("algo, b, expected", [
        ("per-etd0", 2, 66666), ("per-etd0", 4, 40000), ("per-etd-lambda", 8, 22222), ("td0", 0, 200000),
    ])
    def test_budget_iterations(self, algo, b, expected):
        assert services.budget_iterations(algo, b, 200_000) == expected

    def test_algo_configs_expand_periodic_algorithms(self):
        cfg = build_config("run", figure="1a")

        configs = services.algo_configs(cfg)

        assert [(c.algo, c.b) for c in configs] == [
            ("td0", 0), ("etd0", 0), ("per-etd0", 2), ("per-etd0", 4), ("per-etd0", 8),
        ]

    def test_lambda_only_reaches_lambda_algorithms(self):
        cfg = ExperimentConfig(algos=["etd0", "per-etd-lambda"], lam=0.4)

        configs = services.algo_configs(cfg)

        assert [c.lam for c in configs] == [0.0, 0.4]

    def test_points_set_the_stride(self):
        cfg = ExperimentConfig(points=200)

        assert services.stride_for(cfg, 40000) == 200
        assert services.stride_for(cfg, 50) == 1

    def test_seeds_are_consecutive(self):
        cfg = ExperimentConfig(n_seeds=3, base_seed=10, T=5)
        setting = services.build_setting(cfg)

        specs = services.plan_trials(cfg, setting, AlgoConfig("per-etd0", b=4))

        assert [spec.seed for spec in specs] == [10, 11, 12]

    def test_radius_projection(self):
        cfg = ExperimentConfig(projection="radius", radius=3.0)
        setting = services.build_setting(cfg)

        assert services.ball_for(cfg, setting, AlgoConfig("etd0")).radius == 3.0

    def test_theory_projection_uses_the_emphatic_key_matrix(self):
        cfg = ExperimentConfig(features="phi1", projection="theory")
        setting = services.build_setting(cfg)
        model, _ = services.key_model(setting, AlgoConfig("etd0"))
        mu = monotonicity_constant(model.a_matrix)

        ball = services.ball_for(cfg, setting, AlgoConfig("per-etd0", b=2))

        assert mu == pytest.approx(0.1336, abs=1e-3)
        assert ball.radius == pytest.approx(default_radius(setting.features, 1.0, setting.gamma, mu))

    def test_theory_stepsize_for_periodic_lambda(self):
        cfg = ExperimentConfig(features="phi3", stepsize="theory")
        setting = services.build_setting(cfg)
        model, _ = services.key_model(setting, AlgoConfig("etd-lambda", lam=0.5))

        schedule = services.schedule_for(cfg, setting, AlgoConfig("per-etd-lambda", b=2, lam=0.5))

        assert schedule.kind == "diminishing"
        assert schedule.mu == pytest.approx(monotonicity_constant(model.a_matrix))

    def test_theory_mode_needs_an_emphatic_algorithm(self):
        cfg = ExperimentConfig(stepsize="theory")
        setting = services.build_setting(cfg)

        with pytest.raises(InvalidArgumentError, match="emphatic"):
            services.schedule_for(cfg, setting, AlgoConfig("td0", b=0))

    def test_finite_b_reference_needs_a_periodic_algorithm(self):
        cfg = ExperimentConfig(reference="finite-b")
        setting = services.build_setting(cfg)

        with pytest.raises(InvalidArgumentError, match="periodic"):
            services.reference_theta(cfg, setting, AlgoConfig("td0", b=0))


class TestRunTrials:

    def test_initial_error_is_the_value_norm(self):
        record = services.run_trial(ExperimentConfig(T=0), seed=0)

        assert record.points[0].error == pytest.approx(90.0 * math.sqrt(7.0))
        assert record.final_theta == [0.0]

    def test_trials_are_reproducible(self):
        cfg = ExperimentConfig(T=200, features="phi2")

        assert services.run_trial(cfg, seed=4) == services.run_trial(cfg, seed=4)

    def test_parallel_trials_match_serial(self):
        cfg = ExperimentConfig(algos=["etd0", "per-etd0"], T=100, n_seeds=3)

        assert services.run_experiment(cfg, jobs=1) == services.run_experiment(cfg, jobs=2)

    def test_param_metric_against_theta_star(self):
        cfg = ExperimentConfig(T=0, metric="param-l2", reference="theta-star")
        setting = services.build_setting(cfg)
        theta_star = services.key_model(setting, AlgoConfig("etd0"))[1]

        record = services.run_trial(cfg, seed=0)

        assert record.points[0].error == pytest.approx(float(np.linalg.norm(theta_star)))

    def test_value_rms(self):
        record = services.run_trial(ExperimentConfig(T=0, metric="value-rms"), seed=0)

        assert record.points[0].error == pytest.approx(90.0)

    def test_curves_mark_only_the_last_diverged_point(self):
        cfg = ExperimentConfig(algo="etd0", T=50, n_seeds=1, threshold=1.0)
        stream = io.StringIO()

        write_curves(stream, services.run_trials(cfg))

        lines = stream.getvalue().splitlines()
        assert lines[0] == "algo,b,lambda,seed,iter,transitions,error,diverged"
        assert [line.rsplit(",", 1)[1] for line in lines[1:]] == ["0", "1"]


class TestSweeps:

    def test_loci_on_tabular_features_match_the_projection(self):
        cfg = ExperimentConfig(features="tabular", b=4)

        rows = services.fixed_point_loci(cfg, [0.0, 0.5, 1.0])

        assert len(rows) == 21
        for row in rows:
            assert row.theta_fixed == pytest.approx(row.theta_projection, rel=1e-8)

    def test_loci_only_lambda_sweep(self):
        cfg = ExperimentConfig(features="tabular", b=4, loci_only=True)

        rows = services.sweep_lambda(cfg, [0.0, 1.0])

        assert [row.final_error_mean for row in rows] == [None, None]
        assert rows[1].fixedpoint_dist_to_projection == pytest.approx(0.0, abs=1e-8)

    def test_lambda_zero_row_matches_per_etd0(self):
        cfg = ExperimentConfig(features="phi2", b=4, T=60, n_seeds=3)

        row = services.sweep_lambda(cfg, [0.0])[0]
        expected, _ = services._mean_std(services.final_errors(services.run_trials(cfg, algo=AlgoConfig("per-etd0", b=4))))

        assert row.final_error_mean == expected

    def test_sweep_rho_reports_the_mismatch(self):
        cfg = ExperimentConfig(T=5, n_seeds=2)

        rows = services.sweep_rho(cfg, [0.2, 0.4], vary="target")

        assert len(rows) == 12
        assert sorted({round(row.rho_max, 2) for row in rows}) == [1.4, 2.8]

    def test_sweep_rho_survives_divergence_between_strides(self):
        cfg = ExperimentConfig(algo="etd0", T=400, n_seeds=4, stride=50, threshold=50.0)

        rows = services.sweep_rho(cfg, [0.9], vary="target")

        assert rows[0].iteration == 0
        assert [row.iteration for row in rows] == sorted({row.iteration for row in rows})
        assert all(row.rho_max == pytest.approx(6.3) for row in rows)

    @pytest.mark.slow
    def test_bias_falls_and_variance_grows_with_b(self):
        cfg = build_config("sweep-b", figure="1b")

        summaries = {s.b: s for s in services.bias_variance_by_b(cfg, cfg.b_values, jobs=4)}

        assert summaries[8].bias < summaries[4].bias
        assert summaries[20].flagged or summaries[20].variance > summaries[4].variance

    def test_sweep_rho_needs_baird(self, tmp_path):
        path = tmp_path / "chain.mdp"
        path.write_text("1 2 0.5\n0 0 1.0 1.0\n0 1 0.0 1.0\n", encoding="utf-8")
        cfg = ExperimentConfig(mdp="file", mdp_file=path, features="tabular")

        with pytest.raises(InvalidArgumentError, match="baird"):
            services.sweep_rho(cfg, [0.5], vary="target")


class TestOperatorProbes:

    def test_deterministic_chain_has_no_variance(self):
        mdp = FiniteMdp(transition=np.ones((1, 1, 1)), reward=np.array([[1.0]]), gamma=0.5)
        policy = Policy(np.array([[1.0]]))

        result = services.operator_probe(mdp, policy, policy, FeatureMap(np.array([[1.0]])), np.array([4.0]),
                                         b=2, lam=None, n_samples=10, seed=0)

        assert_allclose(result.mean, [1.75])
        assert result.covariance_trace == pytest.approx(0.0)
        assert result.second_moment == pytest.approx(1.75 ** 2)

    def test_lambda_zero_probe_matches_followon_probe(self):
        setting = services.build_setting(ExperimentConfig(features="phi2"))
        args = (setting.mdp, setting.target, setting.behavior, setting.features, np.array([1.0, 1.0]))

        plain = services.operator_probe(*args, b=4, lam=None, n_samples=200, seed=6)
        traced = services.operator_probe(*args, b=4, lam=0.0, n_samples=200, seed=6)

        assert plain.mean == traced.mean
        assert plain.second_moment == traced.second_moment

    def test_probe_needs_two_samples(self):
        setting = services.build_setting(ExperimentConfig())

        with pytest.raises(InvalidArgumentError, match="n_samples"):
            services.operator_probe(setting.mdp, setting.target, setting.behavior, setting.features,
                                    np.zeros(1), b=2, lam=None, n_samples=1, seed=0)

    def test_variance_growth_rate(self):
        rate = services.variance_growth_rate([1, 2, 3], [math.e, math.e ** 2, math.e ** 3])

        assert rate == pytest.approx(1.0)

    def test_variance_growth_rate_needs_positive_moments(self):
        with pytest.raises(InvalidArgumentError):
            services.variance_growth_rate([1, 2], [1.0, 0.0])

    @pytest.mark.slow
    def test_probe_mean_matches_the_finite_b_operator(self):
        cfg = ExperimentConfig(p_solid_target=0.2, features="phi2")
        setting = services.build_setting(cfg)
        theta = np.array([1.0, -1.0])
        model = finite_b_operator(setting.features, setting.d_mu, setting.p_pi, setting.r_pi, setting.gamma, 0.0, 12)

        result = services.operator_probe(setting.mdp, setting.target, setting.behavior, setting.features, theta,
                                         b=12, lam=None, n_samples=200_000, seed=1)

        expected = analytic_operator(model, theta)
        assert np.all(np.abs(np.array(result.mean) - expected) <= 4.0 * np.array(result.mean_se) + 1e-9)

    @pytest.mark.slow
    def test_second_moment_grows_with_b(self):
        cfg = ExperimentConfig(algo="per-etd0", n_samples=50_000, probe_theta=[1.0])

        short, long = services.probe_by_b(cfg, [2, 10])

        assert long.second_moment > short.second_moment


class TestFixedPointReport:

    def test_report_on_phi1(self):
        report = services.fixed_point_report(ExperimentConfig(), b=4, T=1000)

        assert report.rho_max == pytest.approx(6.3)
        assert report.variance_regime == "exponential"
        assert report.emphatic_mass == pytest.approx(100.0)
        assert 0 < report.mu <= report.lipschitz
        assert report.selected_b >= 1
        assert len(report.theta_b) == 1

    def test_report_without_b(self):
        report = services.fixed_point_report(ExperimentConfig(features="phi3", lam=0.5))

        assert report.theta_b is None and report.selected_b is None
        assert len(report.theta) == 2


class TestSettingsFile:

    def test_sections_map_to_fields(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "[mdp]\ntarget = 0.5\n\n[algo]\nname = per-etd-lambda\nlambda = 0.3\n\n"
            "[experiment]\nT = 10\nseeds = 3\nb_values = 2, 4\n",
            encoding="utf-8",
        )

        values = read_settings_file(path)

        assert values == {
            "p_solid_target": "0.5", "algo": "per-etd-lambda", "lam": "0.3", "T": "10", "n_seeds": "3",
            "b_values": ["2", "4"],
        }
        cfg = build_config("run", config_path=path)
        assert (cfg.lam, cfg.T, cfg.b_values) == (0.3, 10, [2, 4])

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[algo]\nbogus = 1\n", encoding="utf-8")

        with pytest.raises(InvalidArgumentError, match="algo.bogus"):
            read_settings_file(path)

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[server]\nport = 1\n", encoding="utf-8")

        with pytest.raises(InvalidArgumentError, match="server"):
            read_settings_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidArgumentError, match="does not exist"):
            read_settings_file(tmp_path / "absent.ini")

    def test_flags_beat_file_beat_figure(self, tmp_path):
        path = tmp_path / "seeds.ini"
        path.write_text("[experiment]\nseeds = 3\npoints = 50\n", encoding="utf-8")

        cfg = build_config("run", figure="1a", config_path=path, overrides={"n_seeds": 5, "budget": None})

        assert cfg.n_seeds == 5
        assert cfg.points == 50
        assert cfg.budget == presets.BUDGET

    def test_figure_belongs_to_another_command(self):
        with pytest.raises(InvalidArgumentError, match="sweep-b"):
            build_config("run", figure="1b")

    @pytest.mark.parametrize("figure, features", [("2-phi1", "phi1"), ("2-phi2", "phi2"), ("3-phi3", "phi3")])
    def test_lambda_panels_pick_the_features(self, figure, features):
        cfg = build_config("sweep-lambda", figure=figure)

        assert cfg.features == features
        assert cfg.lambda_values == presets.LAMBDA_GRID

    def test_policy_sweep_panels_pick_b(self):
        assert build_config("sweep-rho", figure="6-b6").b == 6
        assert build_config("sweep-rho", figure="7-b4").vary == "behavior"

    def test_unknown_figure(self):
        with pytest.raises(InvalidArgumentError, match="unknown figure"):
            build_config("run", figure="4")

    def test_validation_errors_name_the_field(self):
        with pytest.raises(InvalidArgumentError, match="lam"):
            build_config("run", overrides={"lam": 1.5})

    def test_config_rejects_unknown_fields(self):
        with pytest.raises(ValueError):
            ExperimentConfig(gamma=0.5)


class TestLoaders:

    def test_mdp_file(self, tmp_path):
        path = tmp_path / "two.mdp"
        path.write_text(
            "# two states\n2 1 0.9\n0 0 1.0 0.0 1.0\n1 0 0.5 1.0 0.0  # back\n",
            encoding="utf-8",
        )

        mdp = load_mdp_file(path)

        assert (mdp.n_states, mdp.n_actions, mdp.gamma) == (2, 1, 0.9)
        assert_allclose(mdp.transition[1, 0], [1.0, 0.0])
        assert mdp.reward[1, 0] == 0.5

    @pytest.mark.parametrize("body, message", [
        ("2 1 0.9\n0 0 1.0 0.0 1.0\n0 0 1.0 0.0 1.0\n", "duplicate"),
        ("2 1 0.9\n0 0 1.0 0.0 1.0\n", "missing"),
        ("2 1 0.9\n0 3 1.0 0.0 1.0\n1 0 0.0 1.0 0.0\n", "out of range"),
        ("2 1\n", "header"),
    ])
    def test_malformed_mdp_file(self, tmp_path, body, message):
        path = tmp_path / "bad.mdp"
        path.write_text(body, encoding="utf-8")

        with pytest.raises(InvalidArgumentError, match=message):
            load_mdp_file(path)

    def test_file_mdp_needs_policies_for_many_actions(self, tmp_path):
        path = tmp_path / "three.mdp"
        path.write_text("1 3 0.5\n0 0 0.0 1.0\n0 1 0.0 1.0\n0 2 0.0 1.0\n", encoding="utf-8")

        with pytest.raises(InvalidArgumentError, match="target_probs"):
            presets.resolve_mdp(ExperimentConfig(mdp="file", mdp_file=path))

    def test_features_csv(self, tmp_path):
        path = tmp_path / "phi.csv"
        path.write_text("1.0,0.0\n0.0,1.0\n1.0,1.0\n", encoding="utf-8")

        features = load_features_csv(path)

        assert (features.n_states, features.d) == (3, 2)

    def test_rank_deficient_features_csv(self, tmp_path):
        path = tmp_path / "phi.csv"
        path.write_text("1.0,2.0\n2.0,4.0\n", encoding="utf-8")

        with pytest.raises(RankDeficiencyError):
            load_features_csv(path)

    def test_feature_count_must_match_states(self, tmp_path):
        path = tmp_path / "phi.csv"
        path.write_text("1.0\n0.5\n", encoding="utf-8")

        with pytest.raises(InvalidArgumentError, match="features cover"):
            presets.resolve_features(ExperimentConfig(features="file", features_file=path), 7)
