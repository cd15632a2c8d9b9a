"""测试共用夹具."""

import numpy as np
import pytest
from loguru import logger

from src.config import AttackConfig, DatasetSpec, ExperimentConfig, TrainConfig
from src.data.datasets import QuerySet
from src.diffusion import DenseNet, DiffusionModel, build_schedule
from src.enums import AttackScenario


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """日志写入临时目录，默认单线程."""
    monkeypatch.setenv("DIFFMIA_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("DIFFMIA_THREADS", "1")
    yield
    # 命令行测试会把处理器绑定到已关闭的捕获流
    logger.remove()


@pytest.fixture
def tiny_model() -> DiffusionModel:
    """随机初始化（输出层非零）的小模型，余弦调度 T = 10."""
    net = DenseNet.initialize(3, [16], time_embed_dim=8, seed=1, zero_final=False)
    return DiffusionModel(net.freeze(), build_schedule("cosine", 10))


@pytest.fixture
def tiny_query() -> QuerySet:
    """6 个样本的平衡查询集."""
    rng = np.random.default_rng(7)
    return QuerySet(
        sample_ids=np.arange(6),
        points=rng.standard_normal((6, 3)),
        labels=np.array([1, 1, 1, 0, 0, 0]),
    )


@pytest.fixture
def tiny_config(tmp_path) -> ExperimentConfig:
    """几秒内可跑完的完整实验配置."""
    return ExperimentConfig(
        name="tiny",
        dataset=DatasetSpec(n=64, dim=2, components=2, member_count=16, query_size=16),
        train=TrainConfig(steps=10, batch_size=8, T=20, hidden_dims=[8], time_embed_dim=4, log_every=5),
        attacks=[
            AttackConfig(scenario=AttackScenario.WHITE_BOX),
            AttackConfig(scenario=AttackScenario.GRAY_BOX),
        ],
        fpr_targets=[0.1],
        output_dir=str(tmp_path / "runs"),
        seed=3,
    )
