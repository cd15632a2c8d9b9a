"""扫描服务：笛卡尔积执行攻击配置，共享与扫描轴无关的模型，支持断点续跑."""

import itertools
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.attacks import (
    MembershipScores,
    blackbox_agnostic_scores,
    graybox_visible_steps,
    guessed_schedule_for,
    make_feature_map,
    score_trajectories,
    truncation_step,
)
from src.config import AttackConfig, ExperimentConfig, config_hash, get_settings, save_experiment
from src.data import storage
from src.data.checkpoint import load_checkpoint, save_checkpoint
from src.diffusion.model import (
    DiffusionModel,
    LossTrajectory,
    ancestral_sample,
    estimated_trajectory,
    exact_trajectory,
)
from src.enums import AttackScenario, ScheduleKind
from src.evaluation.metrics import build_report
from src.exceptions import CheckpointError, ConfigError, DiffMIAError
from src.models import CellStatus, find_cell, get_db_session, init_database, registry_url, upsert_cell
from src.services.experiment_service import PreparedData, prepare_data
from src.services.training_service import TrainingService
from src.utils.seeding import derive_seed

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SweepCellSpec:
    """扫描中的一个单元：一个模型（成员数 × 种子）上的一次攻击."""

    index: int
    member_count: int
    seed: int
    attack: AttackConfig
    base_hash: str

    @property
    def model_key(self) -> str:
        """决定模型的轴取值."""
        return f"m{self.member_count}_s{self.seed}"

    def axes(self) -> Dict[str, Any]:
        """本单元的全部轴取值."""
        return {
            "scenario": self.attack.scenario.value,
            "statistic": self.attack.resolved_statistic.value,
            "truncation_fraction": self.attack.resolved_truncation_fraction,
            "suppression_keep": self.attack.suppression_keep,
            "scheduler_guess": self.attack.scheduler_guess.value if self.attack.scheduler_guess else None,
            "mismatched_scheduler": self.attack.mismatched_scheduler,
            "member_count": self.member_count,
            "seed": self.seed,
        }

    @property
    def cell_hash(self) -> str:
        """单元哈希，包含基础配置与轴取值."""
        attack = self.attack.model_dump(mode="json")
        return config_hash({"base": self.base_hash, "attack": attack, **self.axes()})


@dataclass
class CellResult:
    """单元执行结果."""

    cell: SweepCellSpec
    status: CellStatus
    record: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    def to_row(self) -> Dict[str, Any]:
        """sweep.csv 中的一行."""
        row = {**self.cell.axes(), **self.record}
        row.update(
            {
                "cell_hash": self.cell.cell_hash,
                "model_key": self.cell.model_key,
                "status": self.status.value,
                "error": self.error or "",
            }
        )
        return row


def expand_cells(config: ExperimentConfig) -> List[SweepCellSpec]:
    """把扫描轴展开为单元列表；未扫描的轴取基础配置的值.

    Args:
        config: 实验配置，基础攻击为 ``attacks`` 的第一项

    Returns:
        List[SweepCellSpec]: 按 (seed, member_count, scenario, scheduler_guess,
        mismatched_scheduler, suppression_keep, statistic, truncation_fraction) 顺序展开的单元

    Raises:
        ConfigError: 某个轴组合得到非法的攻击配置
    """
    base = config.attacks[0] if config.attacks else AttackConfig()
    sweep = config.sweep
    base_hash = config_hash(config.model_dump(mode="json", exclude={"sweep", "output_dir"}))

    def axis(name: str, default: list) -> list:
        values = getattr(sweep, name) if sweep is not None else None
        return list(values) if values is not None else default

    cells = []
    combos = itertools.product(
        axis("seed", [config.seed]),
        axis("member_count", [config.dataset.member_count]),
        axis("scenario", [base.scenario]),
        axis("scheduler_guess", [base.scheduler_guess]),
        axis("mismatched_scheduler", [base.mismatched_scheduler]),
        axis("suppression_keep", [base.suppression_keep]),
        axis("statistic", [base.statistic]),
        axis("truncation_fraction", [base.truncation_fraction]),
    )
    for index, combo in enumerate(combos):
        seed, member_count, scenario, guess, mismatched, keep, statistic, fraction = combo
        update = {
            "scenario": scenario,
            "scheduler_guess": guess,
            "mismatched_scheduler": mismatched,
            "suppression_keep": keep,
            "statistic": statistic,
            "truncation_fraction": fraction,
        }
        try:
            attack = AttackConfig.model_validate({**base.model_dump(), **update})
        except ValidationError as e:
            raise ConfigError(f"sweep cell {index} is not a valid attack: {e}") from e
        cells.append(SweepCellSpec(index, int(member_count), int(seed), attack, base_hash))
    return cells


class ModelContext:
    """一个模型键下共享的数据、模型与轨迹缓存."""

    def __init__(self, config: ExperimentConfig, member_count: int, seed: int, model_dir: Path):
        self.config = config
        self.seed = seed
        self.model_dir = model_dir
        self.data: PreparedData = prepare_data(config, member_count=member_count, seed=seed)
        self.model = self._load_or_train()
        self._exact: Dict[Tuple[str, int], List[LossTrajectory]] = {}
        self._estimated: Dict[Tuple[str, ScheduleKind], List[LossTrajectory]] = {}
        self._shadow: Optional[DiffusionModel] = None
        self._synthetic: Dict[int, Any] = {}

    def _load_or_train(self) -> DiffusionModel:
        path = self.model_dir / "target.ckpt"
        if path.exists():
            try:
                model = load_checkpoint(path)
                logger.info(f"Reusing checkpoint {path}")
                return model
            except CheckpointError as e:
                logger.warning(f"Ignoring unreadable checkpoint {path}: {e}")
        train_config = self.config.train.model_copy(update={"seed": None})
        result = TrainingService().train_model(self.data.member_points, train_config, self.seed)
        save_checkpoint(result.model, path)
        storage.save_loss_log(result.loss_log, self.model_dir / "loss_log.csv")
        return result.model

    @property
    def shadow(self) -> DiffusionModel:
        """影子模型（每个模型键只训练一次）."""
        if self._shadow is None:
            path = self.model_dir / "shadow.ckpt"
            if path.exists():
                self._shadow = load_checkpoint(path)
            else:
                base = self.config.attacks[0] if self.config.attacks else AttackConfig()
                shadow_config = self.config.shadow_config.model_copy(update={"seed": None})
                result = TrainingService().train_shadow(
                    self.model.as_sampler(), base.synthetic_count, shadow_config, derive_seed(self.seed, "shadow")
                )
                save_checkpoint(result.model, path)
                self._shadow = result.model
        return self._shadow

    def synthetic(self, count: int):
        """目标模型的 K 个生成样本."""
        if count not in self._synthetic:
            self._synthetic[count] = ancestral_sample(self.model, count, derive_seed(self.seed, "synthetic"))
        return self._synthetic[count]

    def exact(self, model: DiffusionModel, role: str, noise_draws: int) -> List[LossTrajectory]:
        """完整的精确轨迹."""
        key = (role, noise_draws)
        if key not in self._exact:
            query = self.data.query
            self._exact[key] = [
                exact_trajectory(model, x, self.seed, noise_draws, int(i))
                for i, x in zip(query.sample_ids, query.points)
            ]
        return self._exact[key]

    def estimated(self, model: DiffusionModel, role: str, attack: AttackConfig) -> List[LossTrajectory]:
        """全部时间步上的估计轨迹，按猜测的调度缓存."""
        guessed = guessed_schedule_for(model, attack)
        key = (role, guessed.kind)
        if key not in self._estimated:
            query = self.data.query
            reconstructor = model.as_reconstructor()
            self._estimated[key] = [
                estimated_trajectory(reconstructor, x, guessed, None, self.seed, int(i))
                for i, x in zip(query.sample_ids, query.points)
            ]
        return self._estimated[key]


def _score_on(
    context: ModelContext, model: DiffusionModel, role: str, attack: AttackConfig, as_whitebox: bool
) -> MembershipScores:
    fraction = attack.resolved_truncation_fraction
    if as_whitebox:
        trajectories = context.exact(model, role, attack.noise_draws)
        T_trun = truncation_step(fraction, model.T)
        return score_trajectories(
            trajectories, attack.resolved_statistic, AttackScenario.WHITE_BOX, T_trun, fraction
        )
    visible = graybox_visible_steps(model.T, attack)
    restricted = [traj.restricted(visible) for traj in context.estimated(model, role, attack)]
    return score_trajectories(restricted, attack.resolved_statistic, AttackScenario.GRAY_BOX, None, fraction)


def score_cell(context: ModelContext, attack: AttackConfig) -> MembershipScores:
    """在共享缓存上计算一个单元的分数."""
    scenario = attack.scenario
    if scenario is AttackScenario.WHITE_BOX:
        return _score_on(context, context.model, "target", attack, as_whitebox=True)
    if scenario is AttackScenario.GRAY_BOX:
        return _score_on(context, context.model, "target", attack, as_whitebox=False)
    if scenario is AttackScenario.BLACK_BOX_SPECIFIC:
        as_whitebox = attack.shadow_attack is AttackScenario.WHITE_BOX
        inner = _score_on(context, context.shadow, "shadow", attack, as_whitebox)
        return replace(inner, scenario=scenario, extra={"shadow_attack": attack.shadow_attack.value})
    synthetic = context.synthetic(attack.synthetic_count)
    feature_map = make_feature_map(
        attack.feature_map, synthetic.shape[1], attack.projection_dim, derive_seed(context.seed, "features")
    )
    return blackbox_agnostic_scores(synthetic, context.data.query, feature_map)


def _describe(error: Exception) -> str:
    """错误列内容；库内异常只写消息，其它异常带上类型名."""
    if isinstance(error, DiffMIAError):
        return str(error)
    return f"{type(error).__name__}: {error}"


class SweepService:
    """扫描服务类."""

    def __init__(self, config: ExperimentConfig, out_dir: Optional[PathLike] = None):
        """初始化扫描服务.

        Args:
            config: 实验配置
            out_dir: 输出目录
        """
        self.settings = get_settings()
        self.config = config
        self.out_dir = Path(out_dir or config.output_dir or self.settings.default_output_dir)
        self.registry = registry_url(self.out_dir)

    def cell_dir(self, cell: SweepCellSpec) -> Path:
        """单元输出目录."""
        return self.out_dir / "cells" / cell.cell_hash

    def model_dir(self, model_key: str) -> Path:
        """模型输出目录."""
        return self.out_dir / "models" / model_key

    def _load_finished(self, cell: SweepCellSpec) -> Optional[CellResult]:
        """登记为完成且输出文件可以解析时返回已有结果."""
        session_gen = get_db_session(self.registry)
        session = next(session_gen)
        try:
            entry = find_cell(session, cell.cell_hash)
            status = entry.status if entry is not None else None
        finally:
            session_gen.close()
        if status != CellStatus.DONE.value:
            return None
        cell_dir = self.cell_dir(cell)
        try:
            records = storage.read_records(cell_dir / "report.json")
            scores = pd.read_csv(cell_dir / "scores.csv", float_precision="round_trip")
        except (OSError, ValueError) as e:
            logger.warning(f"Cell {cell.cell_hash} registered as done but outputs are invalid: {e}")
            return None
        record = records[0] if isinstance(records, list) and records else {}
        if "score" not in scores.columns or scores.empty or "auc" not in record:
            logger.warning(f"Cell {cell.cell_hash} outputs are incomplete, recomputing")
            return None
        return CellResult(cell, CellStatus.DONE, record)

    def _record(self, result: CellResult) -> None:
        session_gen = get_db_session(self.registry)
        session = next(session_gen)
        upsert_cell(
            session,
            result.cell.cell_hash,
            result.cell.model_key,
            result.cell.axes(),
            result.status,
            error=result.error,
            auc=result.record.get("auc"),
        )
        # 走完生成器以提交事务
        for _ in session_gen:
            pass

    def _run_cell(self, context: ModelContext, cell: SweepCellSpec) -> CellResult:
        scores = score_cell(context, cell.attack)
        report, _ = build_report(
            scores,
            context.data.query.labels,
            self.config.fpr_targets,
            cell.seed,
            member_count=cell.member_count,
            config_hash=cell.cell_hash,
        )
        record = report.to_record()
        cell_dir = self.cell_dir(cell)
        storage.write_frame(scores.to_frame(context.data.query.labels), cell_dir / "scores.csv")
        storage.write_records([record], cell_dir / "report.json")
        return CellResult(cell, CellStatus.DONE, record)

    def _run_group(self, model_key: str, cells: List[SweepCellSpec]) -> List[CellResult]:
        """执行共享同一模型的所有单元；单元失败只记录错误."""
        first = cells[0]
        try:
            context = ModelContext(self.config, first.member_count, first.seed, self.model_dir(model_key))
        except Exception as e:
            logger.error(f"Model {model_key} failed: {type(e).__name__}: {e}")
            return [CellResult(cell, CellStatus.FAILED, error=f"model: {_describe(e)}") for cell in cells]

        results = []
        for cell in cells:
            try:
                results.append(self._run_cell(context, cell))
            except Exception as e:
                logger.error(f"Cell {cell.cell_hash} ({cell.axes()}) failed: {type(e).__name__}: {e}")
                results.append(CellResult(cell, CellStatus.FAILED, error=_describe(e)))
        return results

    def run(self) -> pd.DataFrame:
        """执行扫描并写出 sweep.csv.

        Returns:
            pd.DataFrame: 每个单元一行
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        save_experiment(self.config, self.out_dir / "config.json")
        init_database(self.registry)
        cells = expand_cells(self.config)
        logger.info(f"Sweep with {len(cells)} cells into {self.out_dir}")

        results: Dict[int, CellResult] = {}
        pending: Dict[str, List[SweepCellSpec]] = {}
        for cell in cells:
            finished = self._load_finished(cell)
            if finished is not None:
                results[cell.index] = finished
            else:
                pending.setdefault(cell.model_key, []).append(cell)
        if results:
            logger.info(f"Skipping {len(results)} finished cells")

        with ThreadPoolExecutor(max_workers=self.settings.threads) as pool:
            futures = {pool.submit(self._run_group, key, group): key for key, group in pending.items()}
            for future in as_completed(futures):
                for result in future.result():
                    self._record(result)
                    results[result.cell.index] = result

        rows = [results[cell.index].to_row() for cell in cells]
        frame = pd.DataFrame(rows)
        storage.write_frame(frame, self.out_dir / "sweep.csv")
        failed = sum(1 for r in results.values() if r.status is CellStatus.FAILED)
        if failed:
            logger.warning(f"{failed} of {len(cells)} sweep cells failed")
        logger.info(f"Sweep finished: {len(cells) - failed} cells done")
        return frame


def cmd_sweep(config: ExperimentConfig, out_dir: Optional[PathLike] = None) -> pd.DataFrame:
    """sweep 命令."""
    return SweepService(config, out_dir).run()
