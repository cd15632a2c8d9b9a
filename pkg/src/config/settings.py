"""运行时配置管理."""

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """运行时配置类.

    所有字段都可以通过 ``DIFFMIA_`` 前缀的环境变量或 ``.env`` 文件覆盖，
    例如 ``DIFFMIA_THREADS=4``。
    """

    model_config = SettingsConfigDict(
        env_prefix="DIFFMIA_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application Settings
    log_level: str = Field("INFO", description="日志级别")
    log_dir: str = Field("logs", description="日志目录")

    # Execution
    threads: int = Field(1, ge=1, description="并发 worker 数上限")

    # Outputs
    default_output_dir: str = Field("runs", description="默认输出目录")
    registry_filename: str = Field("registry.db", description="扫描登记数据库文件名")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """验证日志级别."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Invalid log level: {v}")
        return v.upper()


def get_settings() -> Settings:
    """获取配置实例."""
    return Settings()
