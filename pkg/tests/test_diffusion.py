"""扩散模型测试：前向加噪、KL、损失轨迹与采样."""

import numpy as np
import pytest

from src.diffusion import (
    DenseNet,
    DiffusionModel,
    Gaussian,
    LossTrajectory,
    ReconstructionAPI,
    SamplingAPI,
    ancestral_sample,
    build_schedule,
    decoder_variance,
    estimated_trajectory,
    exact_trajectory,
    forward_sample,
    kl_gaussian,
    loss_term,
    noise_block,
    p_theta,
    posterior_q,
    predict_x0,
    prior_term,
    variational_bound,
)
from src.diffusion.schedule import NoiseSchedule
from src.enums import Parameterization, ScheduleKind, TrajectoryKind
from src.exceptions import InvalidArgumentError, NumericallyDegenerateError


class OracleDenoiser:
    """已知真实 x0 的 ε 预测器."""

    def __init__(self, x0, schedule):
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.schedule = schedule

    @property
    def data_dim(self):
        return self.x0.shape[0]

    def forward(self, x, t, T):
        x = np.asarray(x, dtype=np.float64)
        alpha_bar = np.broadcast_to(self.schedule.alpha_bars[np.asarray(t)], (x.shape[0],))[:, None]
        return (x - np.sqrt(alpha_bar) * self.x0) / np.sqrt(1.0 - alpha_bar)


class ConstantDenoiser:
    """输出常数的网络."""

    def __init__(self, dim, value):
        self.dim = dim
        self.value = value

    @property
    def data_dim(self):
        return self.dim

    def forward(self, x, t, T):
        return np.full(np.shape(x), self.value)


@pytest.fixture
def x0():
    return np.array([0.5, -1.0, 0.25])


@pytest.fixture
def oracle_model(x0):
    schedule = build_schedule("linear", 50)
    return DiffusionModel(OracleDenoiser(x0, schedule), schedule)


class TestForwardSample:
    """测试前向加噪."""

    def test_step_zero_is_identity(self, x0):
        """测试 t=0 时返回 x0."""
        schedule = build_schedule("linear", 10)
        assert np.array_equal(forward_sample(schedule, x0, 0, np.ones(3)), x0)

    def test_formula(self, x0):
        """测试 x_t = √ᾱ·x0 + √(1-ᾱ)·ε."""
        schedule = build_schedule("cosine", 10)
        eps = np.array([1.0, 2.0, -1.0])
        alpha_bar = schedule.alpha_bars[4]
        expected = np.sqrt(alpha_bar) * x0 + np.sqrt(1 - alpha_bar) * eps
        assert np.allclose(forward_sample(schedule, x0, 4, eps), expected, rtol=0, atol=1e-14)

    def test_batched_steps(self, x0):
        """测试逐行时间步."""
        schedule = build_schedule("cosine", 10)
        eps = np.ones((3, 3))
        batched = forward_sample(schedule, x0, np.array([1, 5, 9]), eps)
        assert np.allclose(batched[1], forward_sample(schedule, x0, 5, eps[1]))

    def test_shape_mismatch(self, x0):
        """测试噪声形状不符."""
        with pytest.raises(InvalidArgumentError):
            forward_sample(build_schedule("linear", 10), x0, 1, np.ones(2))

    def test_out_of_range(self, x0):
        """测试越界时间步."""
        with pytest.raises(InvalidArgumentError):
            forward_sample(build_schedule("linear", 10), x0, 11, np.ones(3))

    def test_noise_block_is_keyed(self):
        """测试噪声块由 (种子, 样本, 时间步) 唯一确定."""
        a = noise_block(0, 3, 7, 2, 4)
        assert np.array_equal(a, noise_block(0, 3, 7, 2, 4))
        assert np.array_equal(a[:1], noise_block(0, 3, 7, 1, 4))
        assert not np.array_equal(a, noise_block(0, 4, 7, 2, 4))
        assert not np.array_equal(a, noise_block(1, 3, 7, 2, 4))


class TestPredictX0:
    """测试 x0 预测."""

    def test_oracle_inverts_forward(self, oracle_model, x0):
        """测试理想 ε 预测器恢复 x0."""
        eps = np.array([[0.3, -0.2, 1.1], [2.0, 0.0, -0.5]])
        steps = np.array([3, 40])
        x_t = forward_sample(oracle_model.schedule, x0, steps, eps)
        assert np.allclose(predict_x0(oracle_model, x_t, steps), x0, atol=1e-9)

    def test_clamp(self):
        """测试输出截断到 [-C, C]."""
        schedule = build_schedule("cosine", 10)
        model = DiffusionModel(ConstantDenoiser(2, 100.0), schedule, Parameterization.X0, clamp=2.0)
        out = predict_x0(model, np.zeros((4, 2)), 3)
        assert np.all(out == 2.0)

    def test_x0_parameterization(self):
        """测试 x0 参数化直接使用网络输出."""
        schedule = build_schedule("cosine", 10)
        model = DiffusionModel(ConstantDenoiser(2, 0.7), schedule, Parameterization.X0)
        assert np.allclose(predict_x0(model, np.zeros(2), 5), 0.7)

    def test_degenerate_alpha_bar(self):
        """测试 ᾱ_t 低于 1e-12 时报错."""
        schedule = NoiseSchedule.from_alphas(ScheduleKind.LINEAR, [1.0, 1e-7, 1e-7])
        model = DiffusionModel(ConstantDenoiser(2, 0.0), schedule)
        predict_x0(model, np.zeros(2), 1)
        with pytest.raises(NumericallyDegenerateError):
            predict_x0(model, np.zeros(2), 2)

    def test_small_linear_schedule_is_degenerate_late(self):
        """测试 T=10 线性调度的末端步不可反推 x0."""
        net = DenseNet.initialize(2, [4], time_embed_dim=4, seed=0).freeze()
        model = DiffusionModel(net, build_schedule("linear", 10))
        with pytest.raises(NumericallyDegenerateError):
            exact_trajectory(model, np.zeros(2))

    def test_invalid_clamp(self):
        """测试非正截断范围."""
        with pytest.raises(InvalidArgumentError):
            DiffusionModel(ConstantDenoiser(2, 0.0), build_schedule("cosine", 10), clamp=0.0)


class TestKlGaussian:
    """测试闭式 KL."""

    def test_identical(self):
        """测试相同分布 KL 为 0."""
        g = Gaussian(np.array([1.0, 2.0]), 0.3)
        assert kl_gaussian(g, g) == pytest.approx(0.0, abs=1e-15)

    def test_known_values(self):
        """测试已知数值."""
        assert kl_gaussian(Gaussian(np.zeros(1), 1.0), Gaussian(np.ones(1), 1.0)) == pytest.approx(0.5)
        assert kl_gaussian(Gaussian(np.zeros(2), 1.0), Gaussian(np.ones(2), 1.0)) == pytest.approx(1.0)
        # 只有方差不同：0.5·d·(r - 1 - ln r)
        expected = 0.5 * 3 * (0.5 - 1 - np.log(0.5))
        assert kl_gaussian(Gaussian(np.zeros(3), 1.0), Gaussian(np.zeros(3), 2.0)) == pytest.approx(expected)

    def test_monte_carlo(self):
        """测试与 10^6 次蒙特卡洛估计的相对误差小于 2%."""
        mean_q, var_q = np.array([0.0, 0.5, -1.0]), 0.5
        mean_p, var_p = np.array([1.0, 0.0, -0.75]), 2.0
        rng = np.random.default_rng(0)
        x = mean_q + np.sqrt(var_q) * rng.standard_normal((1_000_000, 3))

        def log_density(mean, var):
            return -0.5 * (3 * np.log(2 * np.pi * var) + np.sum((x - mean) ** 2, axis=1) / var)

        estimate = float(np.mean(log_density(mean_q, var_q) - log_density(mean_p, var_p)))
        closed = kl_gaussian(Gaussian(mean_q, var_q), Gaussian(mean_p, var_p))
        assert abs(estimate - closed) <= 0.02 * closed

    def test_both_degenerate_uses_floor(self):
        """测试两个方差均为 0 时使用 σ_floor²."""
        q = Gaussian(np.array([0.0]), 0.0)
        p = Gaussian(np.array([1e-3]), 0.0)
        assert kl_gaussian(q, q) == 0.0
        assert kl_gaussian(q, p) == pytest.approx(0.5 * 1e-6 / 1e-6)

    def test_one_degenerate(self):
        """测试只有一方退化时报错."""
        with pytest.raises(NumericallyDegenerateError):
            kl_gaussian(Gaussian(np.zeros(2), 1.0), Gaussian(np.zeros(2), 0.0))
        with pytest.raises(NumericallyDegenerateError):
            kl_gaussian(Gaussian(np.zeros(2), 0.0), Gaussian(np.zeros(2), 1.0))

    def test_dimension_mismatch(self):
        """测试维度不符."""
        with pytest.raises(InvalidArgumentError):
            kl_gaussian(Gaussian(np.zeros(2), 1.0), Gaussian(np.zeros(3), 1.0))

    def test_negative_variance(self):
        """测试负方差."""
        with pytest.raises(InvalidArgumentError):
            Gaussian(np.zeros(2), -1.0)


class TestPosterior:
    """测试后验与模型反向分布."""

    def test_posterior_mean(self, x0):
        """测试后验均值公式."""
        schedule = build_schedule("cosine", 20)
        x_t = np.array([0.1, 0.2, 0.3])
        t = 6
        alpha, alpha_bar, prev = schedule.alphas[t], schedule.alpha_bars[t], schedule.alpha_bars[t - 1]
        expected = (np.sqrt(prev) * (1 - alpha) * x0 + np.sqrt(alpha) * (1 - prev) * x_t) / (1 - alpha_bar)
        q = posterior_q(schedule, x_t, x0, t)
        assert np.allclose(q.mean, expected, rtol=0, atol=1e-12)

    def test_first_step_reproduces_x0(self, x0):
        """测试 t=1 时后验均值就是 x0."""
        q = posterior_q(build_schedule("linear", 100), np.ones(3), x0, 1)
        assert q.variance == 0.0
        assert np.allclose(q.mean, x0)

    def test_p_theta_uses_posterior_variance(self, oracle_model, x0):
        """测试模型反向分布方差固定为 Σ_q(t)."""
        x_t = forward_sample(oracle_model.schedule, x0, 10, np.ones(3))
        p = p_theta(oracle_model, x_t[None, :], 10)
        q = posterior_q(oracle_model.schedule, x_t, x0, 10)
        assert p.variance == pytest.approx(q.variance)
        assert np.allclose(p.mean[0], q.mean, atol=1e-9)

    def test_decoder_variance(self):
        """测试 ℒ_0 解码方差取 Σ_q(2)."""
        schedule = build_schedule("linear", 100)
        assert decoder_variance(schedule) == pytest.approx(schedule.posterior_coefficients(2).variance)
        assert decoder_variance(schedule) > 0


class TestLossTerms:
    """测试变分下界各项."""

    def test_prior_term_two_ways(self, x0):
        """测试先验项与 kl_gaussian 一致."""
        schedule = build_schedule("linear", 100)
        alpha_bar = schedule.alpha_bars[100]
        direct = kl_gaussian(
            Gaussian(np.sqrt(alpha_bar) * x0, 1 - alpha_bar), Gaussian(np.zeros(3), 1.0)
        )
        assert prior_term(schedule, x0) == pytest.approx(direct, abs=1e-12)

    def test_index_mapping(self, tiny_model, x0):
        """测试 ℒ_t 与轨迹中第 t 项一致."""
        trajectory = exact_trajectory(tiny_model, x0, noise_seed=4, sample_id=2)
        for t in [0, 1, 5, tiny_model.T - 1]:
            single = loss_term(tiny_model, x0, t, noise_seed=4, sample_id=2)
            assert single == pytest.approx(trajectory.values[t], rel=1e-3, abs=1e-9)
        assert loss_term(tiny_model, x0, tiny_model.T) == prior_term(tiny_model.schedule, x0)

    @pytest.mark.parametrize("t", [-1, 11, 2.5, True])
    def test_invalid_index(self, tiny_model, x0, t):
        """测试非法下标."""
        with pytest.raises(InvalidArgumentError):
            loss_term(tiny_model, x0, t)

    def test_oracle_terms_vanish(self, oracle_model, x0):
        """测试理想模型的 ℒ_0..ℒ_{T-1} 近似为 0."""
        trajectory = exact_trajectory(oracle_model, x0)
        for t in range(oracle_model.T):
            assert trajectory.values[t] == pytest.approx(0.0, abs=1e-8)


class TestExactTrajectory:
    """测试白盒精确损失轨迹."""

    def test_keys_and_values(self, tiny_model, x0):
        """测试覆盖 0..T 且非负有限."""
        trajectory = exact_trajectory(tiny_model, x0)
        assert trajectory.kind is TrajectoryKind.EXACT
        assert trajectory.steps == list(range(tiny_model.T + 1))
        values = trajectory.as_array()
        assert np.all(np.isfinite(values))
        assert np.all(values >= 0)

    def test_deterministic(self, tiny_model, x0):
        """测试相同种子结果逐位一致，不同样本编号使用不同噪声."""
        a = exact_trajectory(tiny_model, x0, noise_seed=1, sample_id=5)
        b = exact_trajectory(tiny_model, x0, noise_seed=1, sample_id=5)
        c = exact_trajectory(tiny_model, x0, noise_seed=1, sample_id=6)
        assert a.values == b.values
        assert a.values != c.values

    def test_variational_bound_is_sum(self, tiny_model, x0):
        """测试 ℒ_vlb 等于轨迹各项按顺序累加."""
        trajectory = exact_trajectory(tiny_model, x0, noise_seed=2, noise_draws=3, sample_id=1)
        total = 0.0
        for t in range(tiny_model.T + 1):
            total += trajectory.values[t]
        assert variational_bound(tiny_model, x0, noise_seed=2, noise_draws=3, sample_id=1) == total

    def test_noise_draws(self, tiny_model, x0):
        """测试多次噪声抽样与非法抽样数."""
        trajectory = exact_trajectory(tiny_model, x0, noise_draws=4)
        assert trajectory.noise_draws == 4
        with pytest.raises(InvalidArgumentError):
            exact_trajectory(tiny_model, x0, noise_draws=0)

    def test_wrong_shape(self, tiny_model):
        """测试查询样本维度不符."""
        with pytest.raises(InvalidArgumentError):
            exact_trajectory(tiny_model, np.zeros(4))


class TestEstimatedTrajectory:
    """测试灰盒估计损失轨迹."""

    def test_oracle_is_zero(self, oracle_model, x0):
        """测试理想重建下估计损失为 0."""
        trajectory = estimated_trajectory(oracle_model.as_reconstructor(), x0, oracle_model.schedule)
        assert trajectory.kind is TrajectoryKind.ESTIMATED
        assert trajectory.steps == list(range(1, oracle_model.T + 1))
        assert np.allclose(trajectory.as_array(), 0.0, atol=1e-12)

    def test_value_definition(self, tiny_model, x0):
        """测试 ℒ̂_t = ‖x̂0 - x0‖²."""
        trajectory = estimated_trajectory(tiny_model.as_reconstructor(), x0, tiny_model.schedule, [4], 3, 8)
        eps = noise_block(3, 8, 4, 1, 3)[0]
        x_t = forward_sample(tiny_model.schedule, x0, 4, eps)
        expected = float(np.sum((predict_x0(tiny_model, x_t, 4) - x0) ** 2))
        assert trajectory.values[4] == pytest.approx(expected, rel=1e-6)

    def test_mask(self, tiny_model, x0):
        """测试只计算掩码内的时间步."""
        trajectory = estimated_trajectory(tiny_model.as_reconstructor(), x0, tiny_model.schedule, [2, 5])
        assert trajectory.steps == [2, 5]
        assert trajectory.mask == frozenset({2, 5})

    def test_empty_mask(self, tiny_model, x0):
        """测试空掩码."""
        with pytest.raises(InvalidArgumentError):
            estimated_trajectory(tiny_model.as_reconstructor(), x0, tiny_model.schedule, [])

    def test_mask_out_of_range(self, tiny_model, x0):
        """测试掩码包含 t=0."""
        with pytest.raises(InvalidArgumentError):
            estimated_trajectory(tiny_model.as_reconstructor(), x0, tiny_model.schedule, [0, 1])

    def test_guessed_T_mismatch(self, tiny_model, x0):
        """测试猜测的调度步数不符."""
        with pytest.raises(InvalidArgumentError):
            estimated_trajectory(tiny_model.as_reconstructor(), x0, build_schedule("cosine", 11))

    def test_wrong_schedule_guess_changes_values(self, tiny_model, x0):
        """测试猜错调度得到不同的估计."""
        reconstructor = tiny_model.as_reconstructor()
        right = estimated_trajectory(reconstructor, x0, tiny_model.schedule)
        wrong = estimated_trajectory(reconstructor, x0, build_schedule("linear", 10))
        assert right.values != wrong.values


class TestFacades:
    """测试灰盒与黑盒门面."""

    def test_reconstructor_hides_model(self, tiny_model, x0):
        """测试重建门面只暴露 T 与 reconstruct."""
        api = tiny_model.as_reconstructor()
        assert isinstance(api, ReconstructionAPI)
        assert api.T == tiny_model.T
        for name in ("net", "schedule", "model", "_model"):
            assert not hasattr(api, name)
        with pytest.raises(AttributeError):
            api.schedule = tiny_model.schedule
        assert np.allclose(api.reconstruct(x0, 3), predict_x0(tiny_model, x0, 3))

    def test_sampler_hides_model(self, tiny_model):
        """测试采样门面只暴露 sample."""
        api = tiny_model.as_sampler()
        assert isinstance(api, SamplingAPI)
        assert api.data_dim == 3
        for name in ("net", "schedule", "reconstruct"):
            assert not hasattr(api, name)
        assert np.array_equal(api.sample(4, 9), ancestral_sample(tiny_model, 4, 9))


class TestAncestralSample:
    """测试祖先采样."""

    def test_shape_and_determinism(self, tiny_model):
        """测试形状与确定性."""
        a = ancestral_sample(tiny_model, 5, seed=1)
        assert a.shape == (5, 3)
        assert np.all(np.isfinite(a))
        assert np.array_equal(a, ancestral_sample(tiny_model, 5, seed=1))
        assert not np.array_equal(a, ancestral_sample(tiny_model, 5, seed=2))

    def test_clamped(self, tiny_model):
        """测试最后一步输出在截断范围内."""
        samples = ancestral_sample(tiny_model, 50, seed=0)
        assert np.all(np.abs(samples) <= tiny_model.clamp)

    def test_return_trajectory(self, tiny_model):
        """测试同时返回逐步重建."""
        samples, reconstructions = ancestral_sample(tiny_model, 2, seed=0, return_trajectory=True)
        assert len(reconstructions) == tiny_model.T
        assert np.allclose(samples, reconstructions[-1])

    def test_oracle_recovers_point(self, oracle_model, x0):
        """测试理想模型的样本就是 x0."""
        samples = ancestral_sample(oracle_model, 3, seed=0)
        assert np.allclose(samples, x0, atol=1e-6)

    @pytest.mark.parametrize("count", [0, -1, 1.5])
    def test_invalid_count(self, tiny_model, count):
        """测试非法样本数."""
        with pytest.raises(InvalidArgumentError):
            ancestral_sample(tiny_model, count)


class TestLossTrajectory:
    """测试损失轨迹记录."""

    def test_restricted(self):
        """测试限制时间步并记录掩码."""
        trajectory = LossTrajectory(0, TrajectoryKind.EXACT, {0: 1.0, 1: 2.0, 2: 3.0})
        kept = trajectory.restricted([0, 2, 7])
        assert kept.values == {0: 1.0, 2: 3.0}
        assert kept.mask == frozenset({0, 2, 7})
        assert kept.restricted([2]).values == {2: 3.0}

    def test_rejects_negative(self):
        """测试拒绝负值或非有限值."""
        with pytest.raises(InvalidArgumentError):
            LossTrajectory(0, TrajectoryKind.EXACT, {0: -1.0})
        with pytest.raises(InvalidArgumentError):
            LossTrajectory(0, TrajectoryKind.EXACT, {0: float("nan")})

    def test_rows(self):
        """测试转换为 CSV 行."""
        rows = LossTrajectory(4, TrajectoryKind.ESTIMATED, {3: 0.5, 1: 0.25}).to_rows()
        assert [r["t"] for r in rows] == [1, 3]
        assert rows[0] == {"sample_id": 4, "kind": "estimated", "t": 1, "value": 0.25, "noise_draws": 1}
