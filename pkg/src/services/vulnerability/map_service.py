"""Morphing Attack Potential (MAP) и его скалярная свертка MAPavg"""
import logging
from typing import Mapping, Optional, Sequence

import numpy as np

from src.models.models import MapMatrix, MorphComparisonSet
from src.services.errors import DataError, EmptyInputError

logger = logging.getLogger(__name__)


def _attack_successes(
    morph: MorphComparisonSet,
    frs_id: str,
    tau: float,
    attempts: int,
    paired: bool,
) -> int:
    """Число успешных попыток для морфа на одной FRS.

    По умолчанию у каждого субъекта независимо считаются пробы < tau среди
    первых attempts, берется минимум. В paired-режиме попытка k успешна,
    только если k-я проба успешна у всех субъектов.
    """
    try:
        subjects = morph.subject_scores(frs_id)
    except KeyError as e:
        raise DataError(e.args[0]) from e
    if len(subjects) < 2:
        raise DataError(f"Морф {morph.morph_id}: в морфе должно быть не меньше двух субъектов")

    hits = []
    for slot, probes in enumerate(subjects, 1):
        if len(probes) < attempts:
            raise DataError(
                f"Морф {morph.morph_id}, FRS {frs_id}, субъект {slot}: "
                f"{len(probes)} проб, нужно {attempts}"
            )
        hits.append(np.asarray(probes[:attempts], dtype=np.float64) < tau)

    if paired:
        return int(np.count_nonzero(np.logical_and.reduce(hits)))
    return int(min(np.count_nonzero(h) for h in hits))


def map_matrix(
    morphs: Sequence[MorphComparisonSet],
    thresholds: Mapping[str, float],
    attempts: int = 4,
    frs_ids: Optional[Sequence[str]] = None,
    paired: bool = False,
) -> MapMatrix:
    """Элемент (i, j) - доля морфов, у которых не меньше i успешных попыток
    против обоих субъектов хотя бы на j системах.
    """
    if not morphs:
        raise EmptyInputError("Нет морфов для MAP")
    if attempts < 1:
        raise ValueError(f"attempts должен быть >= 1, получено {attempts}")

    frs_ids = tuple(sorted(thresholds) if frs_ids is None else frs_ids)
    if not frs_ids:
        raise EmptyInputError("Не задано ни одной FRS для MAP")
    unknown = [f for f in frs_ids if f not in thresholds]
    if unknown:
        raise DataError(f"Нет порога для FRS: {', '.join(unknown)}")

    successes = np.array([
        [_attack_successes(m, f, thresholds[f], attempts, paired) for f in frs_ids]
        for m in morphs
    ])

    values = np.empty((attempts, len(frs_ids)))
    for i in range(1, attempts + 1):
        fooled = np.count_nonzero(successes >= i, axis=1)
        for j in range(1, len(frs_ids) + 1):
            values[i - 1, j - 1] = np.mean(fooled >= j)

    logger.info(f"MAP {attempts}x{len(frs_ids)} по {len(morphs)} морфам (paired={paired})")
    return MapMatrix(values=values, frs_ids=frs_ids)


def default_map_weights(attempts: int, n_frs: int) -> np.ndarray:
    """Веса растут вниз и вправо: w(i, j) = i * j"""
    return np.outer(np.arange(1, attempts + 1), np.arange(1, n_frs + 1)).astype(np.float64)


def map_avg(map_result: MapMatrix, weights: Optional[np.ndarray] = None) -> float:
    """Взвешенное среднее элементов MAP"""
    values = map_result.values
    if weights is None:
        weights = default_map_weights(*values.shape)
    weights = np.asarray(weights, dtype=np.float64)

    if weights.shape != values.shape:
        raise ValueError(f"Форма весов {weights.shape} не совпадает с MAP {values.shape}")
    if np.any(weights < 0):
        raise ValueError("Веса MAPavg должны быть неотрицательными")
    total = weights.sum()
    if total <= 0:
        raise ValueError("Сумма весов MAPavg равна нулю")

    return float((weights * values).sum() / total)


def average_maps(maps: Sequence[MapMatrix]) -> MapMatrix:
    """Поэлементное среднее MAP разных алгоритмов морфинга"""
    if not maps:
        raise EmptyInputError("Нет матриц MAP для усреднения")

    first = maps[0]
    for other in maps[1:]:
        if other.values.shape != first.values.shape or other.frs_ids != first.frs_ids:
            raise DataError("Матрицы MAP отличаются формой или набором FRS")

    return MapMatrix(
        values=np.mean([m.values for m in maps], axis=0),
        frs_ids=first.frs_ids,
    )
