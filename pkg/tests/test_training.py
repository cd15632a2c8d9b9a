"""训练服务测试."""

import numpy as np
import pytest

from src.config import DatasetSpec, ExperimentConfig, TrainConfig
from src.diffusion import ancestral_sample
from src.diffusion.network import DenseNet
from src.exceptions import InvalidArgumentError, TrainingDivergedError
from src.services.experiment_service import prepare_data
from src.services.training_service import TrainingService, train_model, train_shadow


@pytest.fixture
def points():
    return np.random.default_rng(0).normal(size=(32, 2))


@pytest.fixture
def small_config():
    return TrainConfig(steps=20, batch_size=8, T=20, hidden_dims=[16], time_embed_dim=4, log_every=10)


class TestTrainModel:
    """测试目标模型训练."""

    def test_zero_steps_is_initialization(self, points, small_config):
        """测试零步训练等于同种子的初始化."""
        config = small_config.model_copy(update={"steps": 0})
        result = train_model(points, config, seed=5)
        expected = DenseNet.initialize(2, [16], 4, config.activation, seed=5)
        assert result.loss_log == []
        assert result.initial_loss is None
        for got, want in zip(result.model.net.parameters(), expected.parameters()):
            assert np.array_equal(got, want)

    def test_deterministic(self, points, small_config):
        """测试相同输入得到逐位相同的参数与损失."""
        first = train_model(points, small_config, seed=2)
        second = train_model(points, small_config, seed=2)
        assert first.loss_log == second.loss_log
        for a, b in zip(first.model.net.parameters(), second.model.net.parameters()):
            assert np.array_equal(a, b)

    def test_config_seed_wins(self, points, small_config):
        """测试配置中的种子优先."""
        config = small_config.model_copy(update={"seed": 9})
        assert train_model(points, config, seed=1).loss_log == train_model(points, config, seed=2).loss_log

    def test_loss_log(self, points, small_config):
        """测试每一步都记录损失."""
        result = train_model(points, small_config, seed=0)
        assert [step for step, _ in result.loss_log] == list(range(1, 21))
        assert all(np.isfinite(loss) and loss >= 0 for _, loss in result.loss_log)
        assert len(result.loss_frame()) == 20
        assert result.final_loss == result.loss_log[-1][1]

    def test_result_is_frozen(self, points, small_config):
        """测试训练结果的网络已冻结."""
        result = train_model(points, small_config, seed=0)
        assert result.model.net.frozen
        assert result.model.schedule.T == 20

    def test_batch_larger_than_data(self, points):
        """测试批次大于训练集时退化为全量批次."""
        result = train_model(points, TrainConfig(steps=3, batch_size=64, T=20, hidden_dims=[16]), seed=0)
        assert len(result.loss_log) == 3
        assert all(np.isfinite(loss) for _, loss in result.loss_log)

    def test_default_batch_on_smallest_member_count(self):
        """测试缺省批大小可训练 32 个成员."""
        data = np.random.default_rng(1).normal(size=(32, 8))
        config = TrainConfig(steps=5, T=100, hidden_dims=[32])
        assert config.batch_size > 32
        result = train_model(data, config, seed=0)
        assert [step for step, _ in result.loss_log] == [1, 2, 3, 4, 5]
        same = train_model(data, config, seed=0)
        assert result.loss_log == same.loss_log

    def test_empty_data(self, small_config):
        """测试空训练集."""
        with pytest.raises(InvalidArgumentError):
            train_model(np.zeros((0, 2)), small_config)

    def test_divergence(self, points, small_config):
        """测试学习率过大时报告发散."""
        config = small_config.model_copy(update={"learning_rate": 1e30, "steps": 50})
        with np.errstate(all="ignore"):
            with pytest.raises(TrainingDivergedError) as exc_info:
                train_model(points, config, seed=0)
        assert "step" in exc_info.value.diagnostics

    @pytest.mark.slow
    def test_memorizes_two_points(self):
        """测试两点训练集上损失明显下降."""
        data = np.array([[1.0, -1.0], [-1.0, 1.0]])
        config = TrainConfig(
            steps=2000, batch_size=2, T=50, hidden_dims=[64, 64], learning_rate=1e-3, log_every=500
        )
        result = train_model(data, config, seed=0)
        losses = np.array([loss for _, loss in result.loss_log])
        assert losses[-200:].mean() < 0.5 * losses[:10].mean()


class TestTrainShadow:
    """测试影子模型训练."""

    def test_trains_on_generated_samples(self, tiny_model, small_config):
        """测试用生成样本训练."""
        result = train_shadow(tiny_model.as_sampler(), 16, small_config, seed=1)
        assert len(result.loss_log) == 20
        assert result.model.net.data_dim == 3

    def test_invalid_counts(self, tiny_model, small_config):
        """测试生成样本数非法."""
        service = TrainingService()
        with pytest.raises(InvalidArgumentError):
            service.train_shadow(tiny_model.as_sampler(), 0, small_config)
        with pytest.raises(InvalidArgumentError):
            service.train_shadow(tiny_model.as_sampler(), 4, small_config)


@pytest.mark.slow
class TestConvergence:
    """测试标准步数训练后的收敛性质."""

    def test_ema_loss_decreases_when_memorizing(self):
        """测试小训练集上损失的指数滑动平均在 500 步窗口内基本不上升."""
        config = ExperimentConfig(dataset=DatasetSpec(member_count=32, query_size=64))
        data = prepare_data(config)
        result = train_model(data.member_points, config.train, seed=0)
        losses = result.loss_frame().set_index("step")["loss"]
        assert np.isfinite(losses).all()
        ema = losses.ewm(alpha=0.001).mean().to_numpy()
        starts = np.arange(2000, len(ema) - 500, 500)
        violations = sum(ema[s + 500] > 1.02 * ema[s] for s in starts)
        assert violations <= 0.05 * len(starts)

    def test_samples_land_near_modes(self):
        """测试两成分高斯混合上 1000 个生成点至少九成落在某个成分均值的 3σ 内."""
        spec = DatasetSpec(dim=2, components=2, member_count=256, query_size=64)
        data = prepare_data(ExperimentConfig(dataset=spec))
        result = train_model(data.member_points, TrainConfig(), seed=0)
        samples = ancestral_sample(result.model, 1000, seed=1)
        dataset = data.dataset
        raw = samples * dataset.scale + dataset.mean
        means = np.asarray(dataset.generator_params["means"])
        nearest = np.linalg.norm(raw[:, None, :] - means[None, :, :], axis=2).min(axis=1)
        assert (nearest <= 3.0).mean() >= 0.9
