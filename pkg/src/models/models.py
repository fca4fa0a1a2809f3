import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, StrictFloat, StrictInt, StrictStr


class EmbeddingRecord(BaseModel):
    """Один снимок: субъект, порядок съемки, демография и эмбеддинг"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    # без приведения типов: "30" и true в JSON - ошибка записи, а не возраст
    subject_id: StrictStr
    sample_id: StrictStr
    capture_index: StrictInt = Field(ge=0)
    age: StrictInt = Field(ge=0)
    gender: StrictStr
    ethnicity: StrictStr
    embedding: tuple[StrictFloat, ...]

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding, dtype=np.float64)

    @property
    def dim(self) -> int:
        return len(self.embedding)

    def __repr__(self):
        return f"<EmbeddingRecord(subject_id='{self.subject_id}', sample_id='{self.sample_id}')>"


class MorphRecord(BaseModel):
    """Эмбеддинг морфа двух субъектов"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    morph_id: str
    subject_a: str
    subject_b: str
    selection_method: str
    morpher: str
    embedding: tuple[float, ...]

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding, dtype=np.float64)

    @property
    def subjects(self) -> tuple[str, str]:
        return self.subject_a, self.subject_b


@dataclass(frozen=True)
class SubjectRoleSplit:
    subject_id: str
    morph_source: EmbeddingRecord
    probes: tuple[EmbeddingRecord, ...]

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "morph_source": self.morph_source.sample_id,
            "probes": [p.sample_id for p in self.probes],
        }


@dataclass(frozen=True)
class SubjectMetadata:
    subject_id: str
    age: int
    gender: str
    ethnicity: str


class ScoreLabel(str, Enum):
    MATED = 'mated'
    NON_MATED = 'non-mated'
    MATED_MORPH = 'mated-morph'


@dataclass(frozen=True)
class ScoreSample:
    label: ScoreLabel
    score: float
    id_a: str
    id_b: str

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f'Нечисловая оценка сравнения {self.id_a}/{self.id_b}: {self.score}')

    def to_dict(self) -> dict:
        return {"label": self.label.value, "score": self.score, "id_a": self.id_a, "id_b": self.id_b}


class SelectionMethod(str, Enum):
    EMBEDDING = 'embedding'
    RANDOM = 'random'


@dataclass(frozen=True)
class MorphPair:
    subject_a: str
    subject_b: str
    distance: Optional[float]
    selection_method: SelectionMethod

    def __post_init__(self):
        if self.subject_a == self.subject_b:
            raise ValueError(f'Пара из одного субъекта: {self.subject_a}')

    def to_dict(self) -> dict:
        return {
            "subject_a": self.subject_a,
            "subject_b": self.subject_b,
            "distance": self.distance,
            "method": self.selection_method.value,
        }


@dataclass(frozen=True)
class DetPoint:
    fmr: float
    fnmr: float
    threshold: float


@dataclass(frozen=True)
class CalibrationResult:
    frs_id: str
    tau: float
    target_fmr: float
    achieved_fmr: float
    fnmr_at_tau: float
    det_points: tuple[DetPoint, ...] = field(repr=False)
    eer: Optional[float] = None
    n_mated: int = 0
    n_nonmated: int = 0

    def to_dict(self) -> dict:
        return {
            "frs_id": self.frs_id,
            "tau": self.tau,
            "target_fmr": self.target_fmr,
            "achieved_fmr": self.achieved_fmr,
            "fnmr": self.fnmr_at_tau,
            "eer": self.eer,
            "n_mated": self.n_mated,
            "n_nonmated": self.n_nonmated,
        }


@dataclass(frozen=True)
class MorphComparisonSet:
    """Оценки сравнения морфа с пробами каждого субъекта по каждой FRS.

    scores[frs_id][n] - расстояния до проб субъекта n в порядке probe_index.
    """
    morph_id: str
    scores: dict[str, tuple[tuple[float, ...], ...]]

    @property
    def frs_ids(self) -> tuple[str, ...]:
        return tuple(self.scores)

    def subject_scores(self, frs_id: str) -> tuple[tuple[float, ...], ...]:
        if frs_id not in self.scores:
            raise KeyError(f'Морф {self.morph_id} не содержит оценок для FRS {frs_id}')
        return self.scores[frs_id]


@dataclass(frozen=True)
class MapMatrix:
    """Матрица MAP: строка i - не менее i+1 успешных попыток, столбец j - не менее j+1 FRS"""
    values: np.ndarray
    frs_ids: tuple[str, ...]

    @property
    def attempts(self) -> int:
        return int(self.values.shape[0])

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "frs_ids": list(self.frs_ids),
            "matrix": self.values.tolist(),
        }
