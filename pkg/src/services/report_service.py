"""报告服务：把扫描结果整理成截断表，并导出信噪比与损失轨迹剖面."""

from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.config import ExperimentConfig, get_settings
from src.data import storage
from src.data.checkpoint import load_checkpoint
from src.diffusion.model import estimated_trajectory, exact_trajectory
from src.diffusion.schedule import build_schedule
from src.enums import AttackScenario, Statistic
from src.evaluation.analysis import best_over_statistics, trajectory_profile
from src.exceptions import ConfigError
from src.services.experiment_service import ExperimentService, prepare_data

PathLike = Union[str, Path]
TableKey = Tuple[str, int]


def truncation_tables(sweep: pd.DataFrame) -> Dict[TableKey, pd.DataFrame]:
    """按 (场景, 成员数) 把扫描结果透视为 统计函数 × 截断比例 的 AUC 表.

    多个种子取平均；额外的 ``best`` 行为每个截断比例下的最优统计函数。
    """
    done = sweep[sweep["status"] == "done"] if "status" in sweep.columns else sweep
    if done.empty:
        return {}
    tables = {}
    for (scenario, member_count), group in done.groupby(["scenario", "member_count"], sort=True):
        table = group.pivot_table(
            index="statistic", columns="truncation_fraction", values="auc", aggfunc="mean"
        )
        if table.empty:
            continue
        table = table.reindex(sorted(table.columns, reverse=True), axis=1)
        table.loc["best"] = table.max(axis=0)
        tables[(str(scenario), int(member_count))] = table
    return tables


class ReportService:
    """报告服务类."""

    def __init__(self, config: ExperimentConfig, out_dir: Optional[PathLike] = None):
        """初始化报告服务.

        Args:
            config: 实验配置
            out_dir: 输出目录
        """
        self.settings = get_settings()
        self.config = config
        self.out_dir = Path(out_dir or config.output_dir or self.settings.default_output_dir)

    def reference_aucs(
        self, scenario: str, member_count: int, seeds: Sequence[int]
    ) -> Optional[pd.Series]:
        """截断表的 ``ref`` 列：不截断时各统计函数的 AUC，多个种子取平均.

        ``best`` 行为每个种子上最优统计函数 AUC 的平均。只有白盒与灰盒有这一列，
        扫描目录中缺少模型检查点的种子会被跳过。
        """
        if scenario not in (AttackScenario.WHITE_BOX.value, AttackScenario.GRAY_BOX.value):
            return None
        searches = []
        for seed in seeds:
            path = self.out_dir / "models" / f"m{member_count}_s{seed}" / "target.ckpt"
            if not path.exists():
                logger.debug(f"No checkpoint at {path}, skipping reference for seed {seed}")
                continue
            model = load_checkpoint(path)
            query = prepare_data(self.config, member_count=member_count, seed=seed).query
            if scenario == AttackScenario.WHITE_BOX.value:
                trajectories = [
                    exact_trajectory(model, x, seed, 1, int(i))
                    for i, x in zip(query.sample_ids, query.points)
                ]
            else:
                reconstructor = model.as_reconstructor()
                trajectories = [
                    estimated_trajectory(reconstructor, x, model.schedule, None, seed, int(i))
                    for i, x in zip(query.sample_ids, query.points)
                ]
            searches.append(best_over_statistics(trajectories, query.labels, None, AttackScenario(scenario)))
        if not searches:
            return None
        ref = {s.value: float(np.mean([search.aucs[s] for search in searches])) for s in Statistic}
        ref["best"] = float(np.mean([search.best_auc for search in searches]))
        return pd.Series(ref)

    def write_tables(self) -> Dict[TableKey, pd.DataFrame]:
        """读取 sweep.csv 并写出截断表，表头第一列为不截断的参考值."""
        sweep_path = self.out_dir / "sweep.csv"
        if not sweep_path.exists():
            return {}
        sweep = pd.read_csv(sweep_path)
        tables = truncation_tables(sweep)
        for (scenario, member_count), table in tables.items():
            rows = sweep[(sweep["scenario"] == scenario) & (sweep["member_count"] == member_count)]
            ref = self.reference_aucs(scenario, member_count, sorted(int(s) for s in set(rows["seed"])))
            if ref is not None:
                table.insert(0, "ref", ref.reindex(table.index))
            path = self.out_dir / "tables" / f"{scenario}_m{member_count}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            table.to_csv(path, float_format="%.4f")
        logger.info(f"Wrote {len(tables)} truncation tables")
        return tables

    def write_snr_profile(self) -> Path:
        """写出训练调度的逐步信噪比表."""
        schedule = build_schedule(self.config.train.schedule_kind, self.config.train.T)
        frame = pd.DataFrame([point.to_dict() for point in schedule.snr_profile()])
        return storage.write_frame(frame, self.out_dir / "snr_profile.csv")

    def write_trajectory_profile(self) -> Path:
        """对查询集计算精确轨迹，写出成员 / 非成员的逐步损失剖面."""
        service = ExperimentService(self.config, self.out_dir)
        model = service.load_target()
        query = prepare_data(self.config).query
        trajectories = [
            exact_trajectory(model, x, self.config.seed, 1, int(i))
            for i, x in zip(query.sample_ids, query.points)
        ]
        storage.save_trajectories(trajectories, self.out_dir / "trajectories.csv")
        profile = trajectory_profile(trajectories, query.labels)
        return storage.write_frame(profile, self.out_dir / "trajectory_profile.csv")

    def report(self, snr: bool = False, profile: bool = False) -> str:
        """生成报告文本.

        Args:
            snr: 是否导出信噪比表
            profile: 是否导出损失轨迹剖面（需要检查点）

        Returns:
            str: 打印到终端的报告
        """
        sections = []
        tables = self.write_tables()
        for (scenario, member_count), table in tables.items():
            body = table.to_string(float_format="%.4f")
            sections.append(f"[{scenario}] member_count={member_count}\n{body}")

        reports_path = self.out_dir / "reports.csv"
        if not tables and reports_path.exists():
            sections.append(pd.read_csv(reports_path).to_string(index=False))

        if snr:
            sections.append(f"SNR profile written to {self.write_snr_profile()}")
        if profile:
            sections.append(f"Trajectory profile written to {self.write_trajectory_profile()}")

        if not sections:
            raise ConfigError(f"nothing to report in {self.out_dir}: run 'attack' or 'sweep' first")
        return "\n\n".join(sections)


def cmd_report(
    config: ExperimentConfig, out_dir: Optional[PathLike] = None, snr: bool = False, profile: bool = False
) -> str:
    """report 命令."""
    return ReportService(config, out_dir).report(snr=snr, profile=profile)
