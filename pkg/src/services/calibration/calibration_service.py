"""DET-кривые и пороги решения при заданном FMR.

Правило совпадения строгое: сравнение совпадает, если расстояние < tau.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.models.models import CalibrationResult, DetPoint, EmbeddingRecord
from src.services.errors import EmptyInputError
from src.services.similarity.similarity_service import mated_scores, nonmated_scores, sample_subjects

logger = logging.getLogger(__name__)

ORIENTATIONS = ('distance', 'similarity')


def _as_scores(scores: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(scores, dtype=np.float64).ravel()
    if array.size == 0:
        raise EmptyInputError(f"Пустой набор оценок: {name}")
    return array


def apply_orientation(scores: Sequence[float], orientation: str = 'distance') -> np.ndarray:
    """Оценки сходства инвертируются, чтобы везде действовало правило d < tau"""
    if orientation not in ORIENTATIONS:
        raise ValueError(f"Неизвестная ориентация оценок: {orientation}")
    array = np.asarray(scores, dtype=np.float64)
    return -array if orientation == 'similarity' else array


def candidate_thresholds(*score_sets: np.ndarray) -> np.ndarray:
    """Различные наблюдаемые оценки плюс по одному порогу ниже и выше всех"""
    observed = np.unique(np.concatenate(score_sets))
    below = np.nextafter(observed[0], -np.inf)
    above = np.nextafter(observed[-1], np.inf)
    return np.concatenate(([below], observed, [above]))


def _fraction_below(sorted_scores: np.ndarray, thresholds) -> np.ndarray:
    return np.searchsorted(sorted_scores, thresholds, side='left') / sorted_scores.size


def det_curve(mated: Sequence[float], nonmated: Sequence[float]) -> List[DetPoint]:
    """fmr(t) = доля non-mated < t, fnmr(t) = доля mated >= t; точки по возрастанию порога"""
    mated_arr = np.sort(_as_scores(mated, 'mated'))
    nonmated_arr = np.sort(_as_scores(nonmated, 'non-mated'))

    thresholds = candidate_thresholds(mated_arr, nonmated_arr)
    fmr = _fraction_below(nonmated_arr, thresholds)
    fnmr = 1.0 - _fraction_below(mated_arr, thresholds)

    return [
        DetPoint(fmr=float(f), fnmr=float(n), threshold=float(t))
        for f, n, t in zip(fmr, fnmr, thresholds)
    ]


def det_at(mated: Sequence[float], nonmated: Sequence[float], threshold: float) -> Tuple[float, float]:
    """(fmr, fnmr) при одном пороге"""
    return (
        achieved_fmr(nonmated, threshold),
        fnmr_at_threshold(mated, threshold),
    )


def threshold_at_fmr(nonmated: Sequence[float], target: float) -> float:
    """k-я по величине non-mated оценка, k = floor(target * N) + 1"""
    if not 0 <= target < 1:
        raise ValueError(f"target FMR должен быть в [0, 1), получено {target}")
    ordered = np.sort(_as_scores(nonmated, 'non-mated'))
    n = ordered.size

    allowed = math.floor(target * n)
    # защита от ошибок округления в target * n
    while allowed > 0 and allowed / n > target:
        allowed -= 1

    return float(ordered[allowed])


def achieved_fmr(nonmated: Sequence[float], tau: float) -> float:
    scores = _as_scores(nonmated, 'non-mated')
    return float(np.count_nonzero(scores < tau) / scores.size)


def fnmr_at_threshold(mated: Sequence[float], tau: float) -> float:
    scores = _as_scores(mated, 'mated')
    return float(np.count_nonzero(scores >= tau) / scores.size)


def equal_error_rate(mated: Sequence[float], nonmated: Sequence[float]) -> Tuple[float, float]:
    """EER: точка DET с минимальным |FMR - FNMR|, значение - их среднее"""
    points = det_curve(mated, nonmated)
    best = min(points, key=lambda p: abs(p.fmr - p.fnmr))
    return (best.fmr + best.fnmr) / 2, best.threshold


def calibrate(
    frs_id: str,
    mated: Sequence[float],
    nonmated: Sequence[float],
    target_fmr: float = 0.001,
) -> CalibrationResult:
    tau = threshold_at_fmr(nonmated, target_fmr)
    fmr = achieved_fmr(nonmated, tau)
    fnmr = fnmr_at_threshold(mated, tau)
    eer, _ = equal_error_rate(mated, nonmated)

    logger.info(f"Калибровка {frs_id}: tau={tau:.6f}, FMR={fmr:.6f} (цель {target_fmr}), FNMR={fnmr:.6f}")

    return CalibrationResult(
        frs_id=frs_id,
        tau=tau,
        target_fmr=target_fmr,
        achieved_fmr=fmr,
        fnmr_at_tau=fnmr,
        det_points=tuple(det_curve(mated, nonmated)),
        eer=eer,
        n_mated=len(mated),
        n_nonmated=len(nonmated),
    )


def calibrate_embeddings(
    frs_id: str,
    records: Sequence[EmbeddingRecord],
    target_fmr: float = 0.001,
    subset_size: int = 500,
    seed: int = 0,
    nonmated_count: Optional[int] = None,
):
    """Полный протокол: подмножество субъектов, все mated-пары, столько же non-mated.

    Возвращает (CalibrationResult, mated ScoreSample, non-mated ScoreSample).
    """
    subset = sample_subjects(records, subset_size, seed)
    mated = mated_scores(subset)
    if not mated:
        raise EmptyInputError("Нет mated-сравнений: у субъектов меньше двух снимков")

    count = len(mated) if nonmated_count is None else nonmated_count
    nonmated = nonmated_scores(subset, count, seed)

    result = calibrate(
        frs_id,
        [s.score for s in mated],
        [s.score for s in nonmated],
        target_fmr,
    )
    return result, mated, nonmated
