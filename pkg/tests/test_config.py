"""配置测试."""

import json

import pytest
from pydantic import ValidationError

from src.config import (
    AttackConfig,
    DatasetSpec,
    ExperimentConfig,
    SweepSpec,
    TrainConfig,
    config_hash,
    get_settings,
    load_experiment,
    save_experiment,
)
from src.enums import AttackScenario, FeatureMapKind, ScheduleKind, Statistic
from src.exceptions import ConfigError


class TestSettings:
    """测试运行时配置."""

    def test_env_prefix(self, monkeypatch):
        """测试环境变量覆盖."""
        monkeypatch.setenv("DIFFMIA_THREADS", "3")
        monkeypatch.setenv("DIFFMIA_LOG_LEVEL", "debug")
        settings = get_settings()
        assert settings.threads == 3
        assert settings.log_level == "DEBUG"

    def test_invalid_log_level(self, monkeypatch):
        """测试非法日志级别."""
        monkeypatch.setenv("DIFFMIA_LOG_LEVEL", "LOUD")
        with pytest.raises(ValidationError):
            get_settings()


class TestExperimentConfig:
    """测试实验配置."""

    def test_defaults(self):
        """测试默认值."""
        config = ExperimentConfig()
        assert config.version == 1
        assert [a.scenario for a in config.attacks] == [AttackScenario.WHITE_BOX, AttackScenario.GRAY_BOX]
        assert config.fpr_targets == [0.001, 0.01]
        assert config.shadow_config == config.train

    def test_save_and_load(self, tmp_path, tiny_config):
        """测试保存后读取得到相同配置."""
        path = save_experiment(tiny_config, tmp_path / "config.json")
        assert load_experiment(path) == tiny_config

    def test_unknown_key(self, tmp_path):
        """测试未知字段."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"name": "x", "train": {"stepz": 3}}), encoding="utf-8")
        with pytest.raises(ConfigError, match="stepz"):
            load_experiment(path)

    def test_wrong_version(self, tmp_path):
        """测试不支持的版本号."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"version": 2}), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_experiment(path)

    def test_missing_and_malformed(self, tmp_path):
        """测试文件缺失与 JSON 格式错误."""
        with pytest.raises(ConfigError):
            load_experiment(tmp_path / "missing.json")
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_experiment(path)

    def test_config_hash(self, tiny_config):
        """测试配置哈希."""
        digest = config_hash(tiny_config)
        assert len(digest) == 12
        assert all(c in "0123456789abcdef" for c in digest)
        assert digest == config_hash(tiny_config.model_copy(deep=True))
        assert digest != config_hash(tiny_config.with_seed(4))
        assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})

    def test_with_seed(self, tiny_config):
        """测试 --seed 覆盖全部种子."""
        config = tiny_config.model_copy(
            update={
                "dataset": tiny_config.dataset.model_copy(update={"seed": 11}),
                "shadow": TrainConfig(seed=12),
            }
        )
        updated = config.with_seed(5)
        assert updated.seed == 5
        assert updated.dataset_seed == 5
        assert updated.train_seed == 5
        assert updated.shadow.seed is None
        assert config.dataset_seed == 11


class TestDatasetSpec:
    """测试数据集配置校验."""

    def test_odd_query_size(self):
        """测试查询集大小为奇数."""
        with pytest.raises(ValidationError):
            DatasetSpec(n=100, member_count=10, query_size=7)

    def test_query_exceeds_members(self):
        """测试查询集一半超过成员数."""
        with pytest.raises(ValidationError):
            DatasetSpec(n=100, member_count=4, query_size=10)

    def test_not_enough_points(self):
        """测试样本总数不足."""
        with pytest.raises(ValidationError):
            DatasetSpec(n=20, member_count=16, query_size=10)

    def test_bad_radii(self):
        """测试环半径非法."""
        with pytest.raises(ValidationError):
            DatasetSpec(radii=[1.0, -2.0])


class TestTrainConfig:
    """测试训练配置校验."""

    def test_odd_time_embedding(self):
        """测试时间嵌入维度为奇数."""
        with pytest.raises(ValidationError):
            TrainConfig(time_embed_dim=5)

    def test_small_T(self):
        """测试扩散步数过小."""
        with pytest.raises(ValidationError):
            TrainConfig(T=1)

    def test_bad_hidden(self):
        """测试隐藏层宽度非法."""
        with pytest.raises(ValidationError):
            TrainConfig(hidden_dims=[8, 0])


class TestAttackConfig:
    """测试攻击配置."""

    def test_resolved_statistic(self):
        """测试默认统计函数."""
        assert AttackConfig(scenario=AttackScenario.WHITE_BOX).resolved_statistic is Statistic.MAX
        assert AttackConfig(scenario=AttackScenario.GRAY_BOX).resolved_statistic is Statistic.MEDIAN
        specific = AttackConfig(scenario=AttackScenario.BLACK_BOX_SPECIFIC)
        assert specific.resolved_statistic is Statistic.MEDIAN
        assert AttackConfig(statistic="sum").resolved_statistic is Statistic.SUM

    def test_label(self):
        """测试输出标签."""
        assert AttackConfig(truncation_fraction=0.5).label == "whitebox_max_0.5"
        assert AttackConfig(scenario=AttackScenario.GRAY_BOX).label == "graybox_median_0.25"

    def test_label_distinguishes_attack_variants(self):
        """测试调度猜测、步抑制与特征映射进入标签."""
        graybox = AttackConfig(scenario=AttackScenario.GRAY_BOX)
        variants = [
            graybox,
            graybox.model_copy(update={"scheduler_guess": ScheduleKind.COSINE}),
            graybox.model_copy(update={"mismatched_scheduler": True}),
            graybox.model_copy(update={"suppression_keep": 0.25}),
            graybox.model_copy(update={"suppression_keep": 0.25, "suppress_before_truncation": True}),
        ]
        labels = [variant.label for variant in variants]
        assert len(set(labels)) == len(labels)
        assert "guess-cosine" in labels[1]
        assert labels[2].endswith("_mismatched")
        agnostic = AttackConfig(scenario=AttackScenario.BLACK_BOX_AGNOSTIC)
        projected = agnostic.model_copy(
            update={"feature_map": FeatureMapKind.RANDOM_PROJECTION, "projection_dim": 2}
        )
        assert agnostic.label != projected.label
        assert "random_projection2" in projected.label

    def test_default_truncation_by_scenario(self):
        """测试白盒与灰盒的缺省截断比例."""
        assert AttackConfig(scenario=AttackScenario.WHITE_BOX).resolved_truncation_fraction == 0.75
        assert AttackConfig(scenario=AttackScenario.GRAY_BOX).resolved_truncation_fraction == 0.25
        explicit = AttackConfig(scenario=AttackScenario.GRAY_BOX, truncation_fraction=0.5)
        assert explicit.resolved_truncation_fraction == 0.5

    def test_guess_and_mismatch_exclusive(self):
        """测试显式调度猜测与误猜开关不能同时给出."""
        with pytest.raises(ValidationError):
            AttackConfig(
                scenario=AttackScenario.GRAY_BOX,
                scheduler_guess=ScheduleKind.LINEAR,
                mismatched_scheduler=True,
            )

    def test_shadow_attack(self):
        """测试影子攻击方式只能为白盒或灰盒."""
        with pytest.raises(ValidationError):
            AttackConfig(shadow_attack=AttackScenario.BLACK_BOX_AGNOSTIC)

    def test_fraction_range(self):
        """测试截断比例范围."""
        with pytest.raises(ValidationError):
            AttackConfig(truncation_fraction=0.0)
        with pytest.raises(ValidationError):
            AttackConfig(suppression_keep=1.5)


class TestSweepSpec:
    """测试扫描轴."""

    def test_empty_axis(self):
        """测试空轴."""
        with pytest.raises(ValidationError):
            SweepSpec(statistic=[])

    def test_fraction_out_of_range(self):
        """测试截断比例越界."""
        with pytest.raises(ValidationError):
            SweepSpec(truncation_fraction=[0.5, 1.5])

    def test_truncation_table(self):
        """测试截断表扫描为全部统计函数 × 七个截断比例."""
        spec = SweepSpec.truncation_table(SweepSpec(seed=[0, 1]))
        assert spec.statistic == list(Statistic)
        assert spec.truncation_fraction == [1.0, 0.975, 0.875, 0.75, 0.625, 0.5, 0.25]
        assert len(spec.statistic) * len(spec.truncation_fraction) == 28
        assert spec.seed == [0, 1]


class TestAttackLabels:
    """测试实验内攻击标签唯一."""

    def test_duplicate_labels_rejected(self):
        """测试两个相同攻击被拒绝."""
        graybox = {"scenario": "graybox"}
        with pytest.raises(ValidationError):
            ExperimentConfig(attacks=[graybox, graybox])

    def test_guess_variants_accepted(self):
        """测试仅调度猜测不同的两个灰盒攻击可以共存."""
        config = ExperimentConfig(
            attacks=[{"scenario": "graybox"}, {"scenario": "graybox", "mismatched_scheduler": True}]
        )
        assert len({attack.label for attack in config.attacks}) == 2
