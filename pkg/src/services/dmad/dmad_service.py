"""Дифференциальное обнаружение морфинг-атак (D-MAD) по эмбеддингам.

Признак - разность эмбеддинга документа и эмбеддинга доверенной пробы.
Ориентация оценок: чем выше значение решающей функции, тем больше похоже на морф.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.models.models import EmbeddingRecord, MorphRecord
from src.services.data_loader.loader_service import group_by_subject, split_roles
from src.services.calibration.calibration_service import candidate_thresholds
from src.services.dmad.svm import SvmSolution, fit_svm
from src.services.errors import DataError, DimensionMismatchError, EmptyInputError, InsufficientDataError

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'dmad-rbf-svm'
MODEL_VERSION = 1

MORPH = 1
BONA_FIDE = -1


def differential(document_embedding, probe_embedding) -> np.ndarray:
    document = np.asarray(document_embedding, dtype=np.float64)
    probe = np.asarray(probe_embedding, dtype=np.float64)
    if document.shape != probe.shape:
        raise DimensionMismatchError(f"размерности не совпадают: {document.shape} и {probe.shape}")
    return document - probe


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    degenerate: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "degenerate": list(self.degenerate)}

    @classmethod
    def from_dict(cls, data: dict) -> 'Standardizer':
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
            degenerate=tuple(data.get("degenerate", ())),
        )


def fit_standardizer(features: np.ndarray) -> Standardizer:
    """Среднее и (популяционное) стандартное отклонение по каждому измерению"""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] < 2:
        raise InsufficientDataError("Для стандартизации нужно минимум 2 обучающих примера")

    mean = features.mean(axis=0)
    std = features.std(axis=0)
    degenerate = np.flatnonzero(std == 0)
    if degenerate.size:
        logger.warning(f"Измерений с нулевой дисперсией: {degenerate.size}, для них std = 1")
        std = std.copy()
        std[degenerate] = 1.0

    return Standardizer(mean=mean, std=std, degenerate=tuple(degenerate.tolist()))


def apply_standardizer(standardizer: Standardizer, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != standardizer.mean.size:
        raise DimensionMismatchError(
            f"размерность признаков {features.shape[-1]}, стандартизатор на {standardizer.mean.size}"
        )
    return (features - standardizer.mean) / standardizer.std


@dataclass
class DmadModel:
    standardizer: Standardizer
    svm: SvmSolution
    test_subjects: Tuple[str, ...] = ()
    config: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.standardizer.mean.size)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        """Значение решающей функции для нестандартизованных разностных признаков"""
        return self.svm.decision_function(apply_standardizer(self.standardizer, np.atleast_2d(features)))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dim": self.dim,
            "gamma": self.svm.gamma,
            "C": self.svm.C,
            "bias": self.svm.bias,
            "standardizer": self.standardizer.to_dict(),
            "support_vectors": self.svm.support_vectors.tolist(),
            "dual_coef": self.svm.dual_coef.tolist(),
            "support_indices": self.svm.support_indices.tolist(),
            "converged": self.svm.converged,
            "iterations": self.svm.iterations,
            "kkt_violation": self.svm.kkt_violation,
            "test_subjects": list(self.test_subjects),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'DmadModel':
        if data.get("format") != MODEL_FORMAT:
            raise DataError(f"Неизвестный формат модели: {data.get('format')}")
        if data.get("version") != MODEL_VERSION:
            raise DataError(f"Неподдерживаемая версия модели: {data.get('version')}")

        dim = int(data["dim"])
        support_vectors = np.asarray(data["support_vectors"], dtype=np.float64).reshape(-1, dim)
        svm = SvmSolution(
            support_vectors=support_vectors,
            dual_coef=np.asarray(data["dual_coef"], dtype=np.float64),
            bias=float(data["bias"]),
            gamma=float(data["gamma"]),
            C=float(data["C"]),
            support_indices=np.asarray(data.get("support_indices", []), dtype=np.int64),
            converged=bool(data.get("converged", True)),
            iterations=int(data.get("iterations", 0)),
            kkt_violation=float(data.get("kkt_violation", 0.0)),
        )
        return cls(
            standardizer=Standardizer.from_dict(data["standardizer"]),
            svm=svm,
            test_subjects=tuple(data.get("test_subjects", ())),
            config=data.get("config", {}),
        )


def train_svm(
    features: np.ndarray,
    labels: np.ndarray,
    C: float = 1.0,
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    max_iterations: int = 100_000,
    seed: int = 0,
    standardizer: Optional[Standardizer] = None,
) -> DmadModel:
    """Обучение на уже стандартизованных признаках.

    standardizer сохраняется в модели для применения к новым данным; без него
    модель работает с признаками как есть.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64)
    if features.shape[0] != labels.size:
        raise DataError(f"Признаков {features.shape[0]}, меток {labels.size}")

    solution = fit_svm(features, labels, C, gamma, tol, max_iterations, seed)

    if standardizer is None:
        dim = features.shape[1]
        standardizer = Standardizer(mean=np.zeros(dim), std=np.ones(dim))
    return DmadModel(standardizer=standardizer, svm=solution)


def fit_dmad(
    features: np.ndarray,
    labels: np.ndarray,
    C: float = 1.0,
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    max_iterations: int = 100_000,
    seed: int = 0,
) -> DmadModel:
    standardizer = fit_standardizer(features)
    scaled = apply_standardizer(standardizer, features)
    return train_svm(scaled, labels, C, gamma, tol, max_iterations, seed, standardizer)


def save_model(model: DmadModel, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(model.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Модель D-MAD сохранена в {path}")


def load_model(path: Path) -> DmadModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл модели не найден: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"Файл модели поврежден: {e.msg}") from e
    return DmadModel.from_dict(data)


def _scores(values: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).ravel()
    if array.size == 0:
        raise EmptyInputError(f"Пустой набор оценок: {name}")
    return array


def macer(attack_scores: Sequence[float], threshold: float) -> float:
    """Доля атак, принятых за bona fide (оценка ниже порога)"""
    scores = _scores(attack_scores, 'attack')
    return float(np.count_nonzero(scores < threshold) / scores.size)


def bpcer(bona_fide_scores: Sequence[float], threshold: float) -> float:
    """Доля bona fide, принятых за атаку (оценка не ниже порога)"""
    scores = _scores(bona_fide_scores, 'bona fide')
    return float(np.count_nonzero(scores >= threshold) / scores.size)


def bpcer_at_macer(
    bona_fide_scores: Sequence[float],
    attack_scores: Sequence[float],
    macer_target: float,
) -> float:
    """BPCER при самом высоком пороге, где эмпирический MACER <= macer_target"""
    if not 0 < macer_target < 1:
        raise ValueError(f"macer_target должен быть в (0, 1), получено {macer_target}")
    bona_fide = _scores(bona_fide_scores, 'bona fide')
    attacks = np.sort(_scores(attack_scores, 'attack'))

    allowed = math.floor(macer_target * attacks.size)
    while allowed > 0 and allowed / attacks.size > macer_target:
        allowed -= 1

    return bpcer(bona_fide, float(attacks[allowed]))


def dmad_det(bona_fide_scores: Sequence[float], attack_scores: Sequence[float]) -> List[Tuple[float, float, float]]:
    """Точки (macer, bpcer, порог) по возрастанию порога"""
    bona_fide = np.sort(_scores(bona_fide_scores, 'bona fide'))
    attacks = np.sort(_scores(attack_scores, 'attack'))

    thresholds = candidate_thresholds(bona_fide, attacks)
    macers = np.searchsorted(attacks, thresholds, side='left') / attacks.size
    bpcers = 1.0 - np.searchsorted(bona_fide, thresholds, side='left') / bona_fide.size

    return [(float(m), float(b), float(t)) for m, b, t in zip(macers, bpcers, thresholds)]


def dmad_eer(bona_fide_scores: Sequence[float], attack_scores: Sequence[float]) -> Tuple[float, float]:
    points = dmad_det(bona_fide_scores, attack_scores)
    m, b, t = min(points, key=lambda p: abs(p[0] - p[1]))
    return (m + b) / 2, t


@dataclass
class DifferentialSet:
    features: np.ndarray
    labels: np.ndarray
    sources: List[Tuple[str, str]]
    subjects: Tuple[str, ...] = ()

    def label_counts(self) -> Dict[str, int]:
        return {
            "morph": int(np.count_nonzero(self.labels == MORPH)),
            "bona_fide": int(np.count_nonzero(self.labels == BONA_FIDE)),
        }


def _subject_groups(
    subjects: Sequence[str],
    morphs: Sequence[MorphRecord],
) -> List[List[str]]:
    """Субъекты одной морф-пары образуют группу, которая целиком уходит в одну часть"""
    parent = {s: s for s in subjects}

    def find(s):
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for morph in morphs:
        ra, rb = find(morph.subject_a), find(morph.subject_b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: Dict[str, List[str]] = {}
    for s in subjects:
        groups.setdefault(find(s), []).append(s)
    return [groups[root] for root in sorted(groups)]


def morph_differentials(
    morphs: Sequence[MorphRecord],
    probes: Dict[str, Sequence[EmbeddingRecord]],
) -> Tuple[List[np.ndarray], List[Tuple[str, str]]]:
    """По одному примеру на каждого участника морфа: морф минус первая проба субъекта"""
    features, sources = [], []
    for morph in morphs:
        for subject_id in morph.subjects:
            subject_probes = probes.get(subject_id)
            if not subject_probes:
                raise InsufficientDataError(f"Нет bona fide проб для субъекта {subject_id} (морф {morph.morph_id})")
            probe = subject_probes[0]
            features.append(differential(morph.vector, probe.vector))
            sources.append((morph.morph_id, probe.sample_id))
    return features, sources


def bona_fide_differentials(
    samples_by_subject: Dict[str, Sequence[EmbeddingRecord]],
    pairs_per_subject: int = 1,
) -> Tuple[List[np.ndarray], List[Tuple[str, str]]]:
    """Разности двух разных снимков одного субъекта: ранний снимок минус поздний"""
    features, sources = [], []
    for samples in samples_by_subject.values():
        ordered = sorted(samples, key=lambda r: (r.capture_index, r.sample_id))
        document = ordered[0]
        for probe in ordered[1:1 + pairs_per_subject]:
            features.append(differential(document.vector, probe.vector))
            sources.append((document.sample_id, probe.sample_id))
    return features, sources


def _differential_set(
    subjects: Sequence[str],
    morphs: Sequence[MorphRecord],
    samples_by_subject: Dict[str, List[EmbeddingRecord]],
    probes: Dict[str, Sequence[EmbeddingRecord]],
    pairs_per_subject: int,
    dim: int,
) -> DifferentialSet:
    chosen = set(subjects)
    inside = [m for m in morphs if m.subject_a in chosen and m.subject_b in chosen]
    straddling = sum(1 for m in morphs if (m.subject_a in chosen) != (m.subject_b in chosen))
    if straddling:
        logger.warning(f"Пропущено морфов с субъектами по разные стороны разбиения: {straddling}")

    morph_x, morph_src = morph_differentials(inside, probes)
    bona_x, bona_src = bona_fide_differentials(
        {s: samples_by_subject[s] for s in subjects}, pairs_per_subject
    )

    features = np.vstack(morph_x + bona_x) if morph_x or bona_x else np.empty((0, dim))
    labels = np.concatenate([np.full(len(morph_x), MORPH), np.full(len(bona_x), BONA_FIDE)])
    return DifferentialSet(features=features, labels=labels, sources=morph_src + bona_src, subjects=tuple(subjects))


def _usable_data(
    records: Sequence[EmbeddingRecord],
    morphs: Sequence[MorphRecord],
) -> Tuple[Dict[str, List[EmbeddingRecord]], Dict[str, Sequence[EmbeddingRecord]], List[MorphRecord]]:
    """Субъекты с двумя и более снимками, их пробы и морфы, у которых есть пробы обоих субъектов"""
    if not morphs:
        raise InsufficientDataError("Нет морфов для D-MAD")

    samples_by_subject = {
        s: samples for s, samples in group_by_subject(records).items() if len(samples) >= 2
    }
    if len(samples_by_subject) < 2:
        raise InsufficientDataError("Нужно минимум 2 субъекта с двумя и более снимками")

    probes = {split.subject_id: split.probes for split in split_roles(
        [r for samples in samples_by_subject.values() for r in samples]
    )}

    usable = [m for m in morphs if m.subject_a in samples_by_subject and m.subject_b in samples_by_subject]
    if not usable:
        raise InsufficientDataError("Ни у одного морфа нет bona fide проб обоих субъектов")
    if len(usable) < len(morphs):
        logger.warning(f"Пропущено морфов без проб: {len(morphs) - len(usable)}")
    return samples_by_subject, probes, usable


def subject_differentials(
    records: Sequence[EmbeddingRecord],
    morphs: Sequence[MorphRecord],
    subjects: Sequence[str],
    pairs_per_subject: int = 1,
) -> DifferentialSet:
    """Разностные признаки только по заданным субъектам (например, отложенная часть модели)"""
    samples_by_subject, probes, usable = _usable_data(records, morphs)
    unknown = [s for s in subjects if s not in samples_by_subject]
    if unknown:
        raise DataError(f"Нет снимков для субъектов: {', '.join(unknown[:5])}")
    return _differential_set(subjects, usable, samples_by_subject, probes, pairs_per_subject, len(records[0].embedding))


def build_training_sets(
    records: Sequence[EmbeddingRecord],
    morphs: Sequence[MorphRecord],
    split_fraction: float = 0.8,
    seed: int = 0,
    pairs_per_subject: int = 1,
) -> Tuple[DifferentialSet, DifferentialSet]:
    """Разбиение 80/20 без пересечения субъектов; все морфы одной пары - по одну сторону"""
    if not 0 < split_fraction < 1:
        raise ValueError(f"split_fraction должен быть в (0, 1), получено {split_fraction}")

    samples_by_subject, probes, morphs = _usable_data(records, morphs)

    groups = _subject_groups(list(samples_by_subject), morphs)
    order = np.random.default_rng(seed).permutation(len(groups))

    target = round(split_fraction * len(samples_by_subject))
    train_subjects: List[str] = []
    test_subjects: List[str] = []
    for k in order.tolist():
        group = groups[k]
        if len(train_subjects) + len(group) <= target:
            train_subjects.extend(group)
        else:
            test_subjects.extend(group)

    dim = len(records[0].embedding)
    train = _differential_set(train_subjects, morphs, samples_by_subject, probes, pairs_per_subject, dim)
    test = _differential_set(test_subjects, morphs, samples_by_subject, probes, pairs_per_subject, dim)

    for name, part in (('train', train), ('test', test)):
        counts = part.label_counts()
        logger.info(
            f"D-MAD {name}: субъектов {len(part.subjects)}, "
            f"морф-разностей {counts['morph']}, bona fide разностей {counts['bona_fide']}"
        )
    if train.features.shape[0] == 0 or len(set(train.labels.tolist())) < 2:
        raise InsufficientDataError("В обучающей части нет обоих классов")

    return train, test
