"""Метрики атакующего потенциала морфов для одной FRS.

Оценки - расстояния, совпадение при d < tau. Вход метрик - вложенная
структура морф -> субъект -> расстояния до проб этого субъекта.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from src.models.models import MorphComparisonSet
from src.services.errors import DataError, EmptyInputError

logger = logging.getLogger(__name__)

SUBJECT_RULES = ('all', 'any')

MorphScores = Sequence[Sequence[Sequence[float]]]


def _validated(morph_scores: MorphScores) -> List[List[np.ndarray]]:
    if len(morph_scores) == 0:
        raise EmptyInputError("Пустой набор морфов")

    morphs = []
    for m, subjects in enumerate(morph_scores):
        if len(subjects) < 2:
            raise DataError(f"Морф #{m}: в морфе должно быть не меньше двух субъектов")
        arrays = [np.asarray(probes, dtype=np.float64) for probes in subjects]
        if any(a.size == 0 for a in arrays):
            raise DataError(f"Морф #{m}: у субъекта нет ни одной пробы")
        morphs.append(arrays)
    return morphs


def mmpmr(morph_scores: MorphScores, tau: float, subject_rule: str = 'all') -> float:
    """Доля успешных морфов.

    Каждый субъект сводится к минимальному расстоянию по своим пробам.
    'any' - достаточно одного субъекта (минимум по субъектам < tau),
    'all' - совпасть должны все субъекты.
    """
    if subject_rule not in SUBJECT_RULES:
        raise ValueError(f"Неизвестное правило: {subject_rule}")

    reduce = np.min if subject_rule == 'any' else np.max
    successes = [
        reduce([probes.min() for probes in subjects]) < tau
        for subjects in _validated(morph_scores)
    ]
    return float(np.mean(successes))


def prod_avg_mmpmr(morph_scores: MorphScores, tau: float) -> float:
    """Среднее по морфам произведения долей успешных проб каждого субъекта"""
    values = [
        np.prod([np.mean(probes < tau) for probes in subjects])
        for subjects in _validated(morph_scores)
    ]
    return float(np.mean(values))


def rmmr(mmpmr_value: float, fnmr_value: float) -> float:
    """RMMR = MMPMR + FNMR"""
    for name, value in (('MMPMR', mmpmr_value), ('FNMR', fnmr_value)):
        if not 0 <= value <= 1:
            raise ValueError(f"{name} должен быть в [0, 1], получено {value}")
    return mmpmr_value + fnmr_value


def ecdf_points(scores: Sequence[float]) -> List[Tuple[float, float]]:
    """Эмпирическая функция распределения: (x, доля оценок <= x) по различным x"""
    array = np.asarray(scores, dtype=np.float64).ravel()
    if array.size == 0:
        raise EmptyInputError("Пустой набор оценок для ECDF")

    values, counts = np.unique(array, return_counts=True)
    cumulative = np.cumsum(counts) / array.size
    cumulative[-1] = 1.0
    return [(float(x), float(f)) for x, f in zip(values, cumulative)]


def rank_average(table: Sequence[Sequence[float]]) -> np.ndarray:
    """Ранги 1..C по возрастанию в каждой строке (равным - средний ранг), затем среднее по строкам"""
    if len(table) == 0:
        raise EmptyInputError("Пустая таблица")

    width = len(table[0])
    if any(len(row) != width for row in table):
        raise ValueError("Таблица не прямоугольная")

    ranks = np.vstack([rankdata(row, method='average') for row in table])
    return ranks.mean(axis=0)


def scores_for_frs(morphs: Sequence[MorphComparisonSet], frs_id: str) -> List[Tuple[Tuple[float, ...], ...]]:
    try:
        return [m.subject_scores(frs_id) for m in morphs]
    except KeyError as e:
        raise DataError(e.args[0]) from e


@dataclass(frozen=True)
class VulnerabilityReport:
    """Строка отчета в разрезе (предотбор, морфер, верификатор)"""
    preselection: str
    morpher: str
    verifier: str
    tau: float
    fnmr: float
    n_morphs: int
    mmpmr_all: float
    mmpmr_any: float
    prod_avg_mmpmr: float
    rmmr: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_vulnerability(
    morphs: Sequence[MorphComparisonSet],
    thresholds: Dict[str, float],
    fnmrs: Dict[str, float],
    preselection: str,
    morpher: str,
    subject_rule: str = 'all',
) -> List[VulnerabilityReport]:
    """Отчет по каждой FRS, для которой известен порог; RMMR берет MMPMR по subject_rule"""
    if not morphs:
        raise EmptyInputError("Нет морфов для оценки")

    reports = []
    for frs_id in sorted(thresholds):
        tau = thresholds[frs_id]
        fnmr = fnmrs[frs_id]
        scores = scores_for_frs(morphs, frs_id)

        by_rule = {rule: mmpmr(scores, tau, rule) for rule in SUBJECT_RULES}
        report = VulnerabilityReport(
            preselection=preselection,
            morpher=morpher,
            verifier=frs_id,
            tau=tau,
            fnmr=fnmr,
            n_morphs=len(scores),
            mmpmr_all=by_rule['all'],
            mmpmr_any=by_rule['any'],
            prod_avg_mmpmr=prod_avg_mmpmr(scores, tau),
            rmmr=rmmr(by_rule[subject_rule], fnmr),
        )
        logger.info(
            f"{preselection}/{morpher}/{frs_id}: MMPMR={report.mmpmr_all:.3f}/{report.mmpmr_any:.3f}, "
            f"prodAvgMMPMR={report.prod_avg_mmpmr:.3f}, RMMR={report.rmmr:.3f}"
        )
        reports.append(report)
    return reports
