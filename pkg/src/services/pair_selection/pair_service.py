import logging
from typing import Iterable, List, Mapping, Optional, Tuple

import numpy as np

from src.models.models import MorphPair, SelectionMethod, SubjectMetadata
from src.services.errors import DataError
from src.services.similarity.similarity_service import ScoreMatrix

logger = logging.getLogger(__name__)


def demographic_ok(a: SubjectMetadata, b: SubjectMetadata, max_age_gap: int) -> bool:
    """Пол и этническая принадлежность совпадают, разница в возрасте не больше max_age_gap"""
    return (
        abs(a.age - b.age) <= max_age_gap
        and a.gender == b.gender
        and a.ethnicity == b.ethnicity
    )


def _greedy_pairs(
    candidates: Iterable[Tuple[int, int]],
    subject_ids: Tuple[str, ...],
    metadata: Mapping[str, SubjectMetadata],
    max_age_gap: int,
    distances: Optional[np.ndarray],
    method: SelectionMethod,
) -> List[MorphPair]:
    """Проход по кандидатам в порядке выбора.

    Успешная пара исключает обоих субъектов, отклоненная - только саму пару,
    поэтому каждая пара просматривается не более одного раза.
    """
    used = np.zeros(len(subject_ids), dtype=bool)
    pairs: List[MorphPair] = []
    rejected = 0
    available = len(subject_ids)

    for i, j in candidates:
        if available < 2:
            break
        if used[i] or used[j]:
            continue

        a, b = subject_ids[i], subject_ids[j]
        if not demographic_ok(metadata[a], metadata[b], max_age_gap):
            rejected += 1
            continue

        used[i] = used[j] = True
        available -= 2
        pairs.append(MorphPair(
            subject_a=a,
            subject_b=b,
            distance=None if distances is None else float(distances[i, j]),
            selection_method=method,
        ))

    logger.info(
        f"Подбор пар ({method.value}): {len(pairs)} пар, "
        f"отклонено по демографии {rejected}, без пары {available} субъектов"
    )
    return pairs


def select_pairs(
    matrix: ScoreMatrix,
    metadata: Mapping[str, SubjectMetadata],
    max_age_gap: int = 5,
) -> List[MorphPair]:
    """Жадный подбор: пары берутся по возрастанию расстояния.

    Эквивалентно повторному argmin по матрице с маскированием: ячейки
    сортируются один раз, равные расстояния идут в построчном порядке (i, j).
    """
    missing = [s for s in matrix.subject_ids if s not in metadata]
    if missing:
        raise DataError(f"Нет демографии для субъектов: {', '.join(missing[:5])}")

    values = matrix.values
    rows, cols = np.nonzero(np.isfinite(values))
    # np.nonzero уже дает построчный порядок, стабильная сортировка его сохраняет
    order = np.argsort(values[rows, cols], kind='stable')

    candidates = zip(rows[order].tolist(), cols[order].tolist())
    return _greedy_pairs(candidates, matrix.subject_ids, metadata, max_age_gap, values, SelectionMethod.EMBEDDING)


def random_pairs(
    metadata: Mapping[str, SubjectMetadata],
    max_age_gap: int = 5,
    seed: int = 0,
) -> List[MorphPair]:
    """Случайный подбор с теми же правилами исключения, что и у select_pairs.

    Последовательные равномерные выборки из оставшихся пар эквивалентны
    проходу по случайной перестановке всех пар с пропуском исключенных.
    """
    subject_ids = tuple(metadata)
    n = len(subject_ids)
    if n < 2:
        return []

    rows, cols = np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(rows))

    candidates = zip(rows[order].tolist(), cols[order].tolist())
    return _greedy_pairs(candidates, subject_ids, metadata, max_age_gap, None, SelectionMethod.RANDOM)
