from pydantic_settings import SettingsConfigDict, BaseSettings
from pathlib import Path
from typing import Optional

possible_paths = [
    Path(__file__).parent.parent.parent / '.env',  # корень проекта
    Path(__file__).parent / '.env',                # рядом с config.py
    Path.cwd() / '.env',                           # текущая директория
]

# .env необязателен: все параметры имеют значения по умолчанию
env_file = next((path for path in possible_paths if path.exists()), None)

BASE_DIR = Path(__file__).resolve().parent.parent.parent


class Settings(BaseSettings):
    LOG_LEVEL: str = 'INFO'
    LOG_FILE: Optional[str] = None

    OUTPUT_DIR: str = 'results'
    DEFAULT_SEED: int = 0

    # Курирование данных и подбор пар
    MIN_SAMPLES: int = 5
    MAX_AGE_GAP: int = 5

    # Калибровка порогов
    TARGET_FMR: float = 0.001
    CALIBRATION_SUBJECTS: int = 500

    # MAP
    MAP_ATTEMPTS: int = 4

    # D-MAD
    SVM_C: float = 1.0
    SVM_TOL: float = 1e-3
    SVM_MAX_ITERATIONS: int = 100_000
    DMAD_SPLIT: float = 0.8

    @property
    def output_path(self) -> Path:
        return Path(self.OUTPUT_DIR)

    # logging
    @property
    def logger_file(self) -> Optional[str]:
        return self.LOG_FILE

    @property
    def logger_level(self) -> str:
        return self.LOG_LEVEL

    model_config = SettingsConfigDict(env_file=env_file, extra='ignore')


settings = Settings()
