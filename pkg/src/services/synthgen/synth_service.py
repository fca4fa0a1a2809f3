"""Синтетические эмбеддинги с геометрией, похожей на FRS.

Центр класса равномерно на единичной сфере, направление снимка - центр плюс
гауссов шум N(0, I/D) с масштабом sigma, длина вектора растет линейно с качеством.
"""
import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.models.models import EmbeddingRecord, MorphPair, MorphRecord
from src.services.data_loader.loader_service import group_by_subject
from src.services.errors import AntipodalParentsError, DataError, DimensionMismatchError, ZeroNormError

logger = logging.getLogger(__name__)

# ниже этой длины суммы единичных векторов родители считаются противоположными
_ANTIPODAL_EPS = 1e-9


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 200
    samples_per_subject: int = 5
    dim: int = 64
    sigma: float = 0.8
    m_min: float = 10.0
    m_max: float = 110.0
    n_genders: int = 2
    n_ethnicities: int = 3
    age_min: int = 18
    age_max: int = 70
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise ValueError(f"n_subjects должен быть >= 2, получено {self.n_subjects}")
        if self.samples_per_subject < 1:
            raise ValueError(f"samples_per_subject должен быть >= 1, получено {self.samples_per_subject}")
        if self.dim < 2:
            raise ValueError(f"dim должен быть >= 2, получено {self.dim}")
        if self.sigma <= 0:
            raise ValueError(f"sigma должен быть > 0, получено {self.sigma}")
        if not 0 < self.m_min <= self.m_max:
            raise ValueError(f"Нужно 0 < m_min <= m_max, получено [{self.m_min}, {self.m_max}]")
        if self.n_genders < 1 or self.n_ethnicities < 1:
            raise ValueError("Алфавиты демографии не могут быть пустыми")
        if self.age_min > self.age_max:
            raise ValueError(f"Пустой диапазон возрастов [{self.age_min}, {self.age_max}]")

    def to_dict(self) -> dict:
        return asdict(self)


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ZeroNormError("нельзя нормировать нулевой вектор")
    return vector / norm


def random_unit_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        vector = rng.standard_normal(dim)
        norm = np.linalg.norm(vector)
        if norm > 0:
            return vector / norm


def sample_embedding(
    center: np.ndarray,
    quality: float,
    sigma: float,
    m_min: float,
    m_max: float,
    rng: np.random.Generator,
) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64)
    noise = rng.standard_normal(center.size) / np.sqrt(center.size)
    direction = _unit(center + sigma * noise)
    return direction * (m_min + (m_max - m_min) * quality)


def generate_population(config: SynthConfig) -> List[EmbeddingRecord]:
    """Детерминированная популяция: все случайные величины из одного потока по seed"""
    rng = np.random.default_rng(config.seed)
    width = len(str(config.n_subjects - 1))

    records = []
    for s in range(config.n_subjects):
        subject_id = f"subject-{s:0{width}d}"
        center = random_unit_vector(config.dim, rng)
        age = int(rng.integers(config.age_min, config.age_max + 1))
        gender = f"gender-{int(rng.integers(config.n_genders))}"
        ethnicity = f"ethnicity-{int(rng.integers(config.n_ethnicities))}"

        for k in range(config.samples_per_subject):
            quality = float(rng.uniform(0.0, 1.0))
            embedding = sample_embedding(center, quality, config.sigma, config.m_min, config.m_max, rng)
            records.append(EmbeddingRecord(
                subject_id=subject_id,
                sample_id=f"{subject_id}-{k}",
                capture_index=k,
                age=age,
                gender=gender,
                ethnicity=ethnicity,
                embedding=tuple(embedding.tolist()),
            ))

    logger.info(
        f"Сгенерировано {len(records)} эмбеддингов: {config.n_subjects} субъектов, "
        f"D={config.dim}, sigma={config.sigma}"
    )
    return records


def generate_morph_embedding(
    e_a: Sequence[float],
    e_b: Sequence[float],
    noise: float = 0.0,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Морф как середина дуги между направлениями родителей, длина - среднее длин"""
    a = np.asarray(e_a, dtype=np.float64)
    b = np.asarray(e_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"размерности не совпадают: {a.shape} и {b.shape}")

    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ZeroNormError("морф не определен для нулевого эмбеддинга")

    midpoint = a / norm_a + b / norm_b
    if np.linalg.norm(midpoint) < _ANTIPODAL_EPS:
        raise AntipodalParentsError("родители противоположны, середина не определена")
    direction = _unit(midpoint)

    if noise > 0:
        if rng is None:
            rng = np.random.default_rng(seed)
        direction = _unit(direction + noise * rng.standard_normal(a.size) / np.sqrt(a.size))

    return direction * (norm_a + norm_b) / 2.0


def generate_morphs(
    records: Sequence[EmbeddingRecord],
    pairs: Sequence[MorphPair],
    noise: float = 0.0,
    seed: int = 0,
    morpher: str = 'midpoint',
) -> List[MorphRecord]:
    """Морфы по списку пар; в морфинг идет самый ранний снимок каждого субъекта"""
    sources = {
        subject_id: min(samples, key=lambda r: (r.capture_index, r.sample_id))
        for subject_id, samples in group_by_subject(records).items()
    }
    rng = np.random.default_rng(seed)

    morphs = []
    for pair in pairs:
        missing = [s for s in (pair.subject_a, pair.subject_b) if s not in sources]
        if missing:
            raise DataError(f"Нет снимков для субъектов пары: {', '.join(missing)}")

        embedding = generate_morph_embedding(
            sources[pair.subject_a].vector,
            sources[pair.subject_b].vector,
            noise,
            rng=rng,
        )
        morphs.append(MorphRecord(
            morph_id=f"{morpher}:{pair.subject_a}+{pair.subject_b}",
            subject_a=pair.subject_a,
            subject_b=pair.subject_b,
            selection_method=pair.selection_method.value,
            morpher=morpher,
            embedding=tuple(embedding.tolist()),
        ))

    logger.info(f"Сгенерировано морфов ({morpher}): {len(morphs)}")
    return morphs
