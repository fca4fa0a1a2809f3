import itertools
import logging
from dataclasses import dataclass
from typing import List, Mapping, Sequence

import numpy as np

from src.models.models import EmbeddingRecord, MorphRecord, ScoreLabel, ScoreSample
from src.services.data_loader.loader_service import group_by_subject
from src.services.errors import DataError, DimensionMismatchError, InsufficientDataError, ZeroNormError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreMatrix:
    """Верхнетреугольная матрица косинусных расстояний, остальное - NaN"""
    subject_ids: tuple[str, ...]
    values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.subject_ids)

    def unmasked_count(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    def distance(self, i: int, j: int) -> float:
        return float(self.values[i, j])


def cosine_distance(e1, e2) -> float:
    """d = 1 - e1.e2 / (|e1| |e2|), в диапазоне [0, 2]"""
    a = np.asarray(e1, dtype=np.float64)
    b = np.asarray(e2, dtype=np.float64)

    if a.shape != b.shape:
        raise DimensionMismatchError(f"размерности не совпадают: {a.shape} и {b.shape}")

    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ZeroNormError("косинусное расстояние не определено для нулевого вектора")

    distance = 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
    return float(min(max(distance, 0.0), 2.0))


def _unit_rows(embeddings: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms == 0):
        raise ZeroNormError("косинусное расстояние не определено для нулевого вектора")
    return embeddings / norms[:, np.newaxis]


def build_score_matrix(subjects: Mapping[str, Sequence[float]]) -> ScoreMatrix:
    """Матрица расстояний по одному эмбеддингу на субъекта (порядок ключей сохраняется)"""
    if len(subjects) < 2:
        raise InsufficientDataError("Для матрицы расстояний нужно минимум 2 субъекта")

    subject_ids = tuple(subjects)
    try:
        embeddings = np.asarray([subjects[s] for s in subject_ids], dtype=np.float64)
    except ValueError as e:
        raise DimensionMismatchError("эмбеддинги разной длины") from e
    if embeddings.ndim != 2:
        raise DimensionMismatchError("эмбеддинги разной длины")

    unit = _unit_rows(embeddings)
    values = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)

    # симметрия и исключение сравнения с самим собой
    values[np.tril_indices(len(subject_ids))] = np.nan

    logger.info(f"Матрица расстояний: {len(subject_ids)} субъектов, {len(subject_ids) * (len(subject_ids) - 1) // 2} пар")
    return ScoreMatrix(subject_ids=subject_ids, values=values)


def record_id(record: EmbeddingRecord) -> str:
    # sample_id уникален только внутри субъекта
    return f"{record.subject_id}/{record.sample_id}"


def mated_scores(records: Sequence[EmbeddingRecord]) -> List[ScoreSample]:
    """Все пары снимков внутри субъекта"""
    scores = []
    for samples in group_by_subject(records).values():
        ordered = sorted(samples, key=lambda r: (r.capture_index, r.sample_id))
        for a, b in itertools.combinations(ordered, 2):
            scores.append(ScoreSample(
                label=ScoreLabel.MATED,
                score=cosine_distance(a.vector, b.vector),
                id_a=record_id(a),
                id_b=record_id(b),
            ))
    logger.info(f"Mated-сравнений: {len(scores)}")
    return scores


def nonmated_scores(records: Sequence[EmbeddingRecord], count: int, seed: int) -> List[ScoreSample]:
    """Равномерная выборка без возвращения из всех межсубъектных пар снимков.

    Пары нумеруются без материализации: снимки сгруппированы по субъектам,
    снимок i сочетается со всеми снимками после конца своего блока.
    """
    groups = group_by_subject(records)
    if len(groups) < 2:
        raise InsufficientDataError("Для non-mated сравнений нужно минимум 2 субъекта")

    ordered = [r for samples in groups.values() for r in samples]
    block_sizes = np.array([len(samples) for samples in groups.values()], dtype=np.int64)
    block_end = np.repeat(np.cumsum(block_sizes), block_sizes)

    partners = len(ordered) - block_end
    offsets = np.concatenate(([0], np.cumsum(partners)))
    population = int(offsets[-1])

    if count < 0 or count > population:
        raise DataError(f"Запрошено {count} non-mated сравнений, доступно {population}")

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(population, size=count, replace=False))

    first = np.searchsorted(offsets, chosen, side='right') - 1
    second = block_end[first] + (chosen - offsets[first])

    scores = []
    for i, j in zip(first.tolist(), second.tolist()):
        a, b = ordered[i], ordered[j]
        scores.append(ScoreSample(
            label=ScoreLabel.NON_MATED,
            score=cosine_distance(a.vector, b.vector),
            id_a=record_id(a),
            id_b=record_id(b),
        ))
    logger.info(f"Non-mated сравнений: {len(scores)} из {population} возможных")
    return scores


def sample_subjects(records: Sequence[EmbeddingRecord], size: int, seed: int) -> List[EmbeddingRecord]:
    """Случайное подмножество субъектов (все их снимки)"""
    subject_ids = sorted({r.subject_id for r in records})
    if size >= len(subject_ids):
        return list(records)

    rng = np.random.default_rng(seed)
    chosen = {subject_ids[k] for k in rng.choice(len(subject_ids), size=size, replace=False)}
    logger.info(f"Выбрано {size} субъектов из {len(subject_ids)}")
    return [r for r in records if r.subject_id in chosen]


def mated_morph_scores(morph: MorphRecord, probes: Sequence[EmbeddingRecord]) -> List[ScoreSample]:
    return [
        ScoreSample(
            label=ScoreLabel.MATED_MORPH,
            score=cosine_distance(morph.vector, probe.vector),
            id_a=morph.morph_id,
            id_b=record_id(probe),
        )
        for probe in probes
    ]
