"""Файловый обмен между командами: CSV через pandas, JSON и JSON Lines.

Каждый CSV и JSON Lines начинается со строки `# config: {...}` с полной конфигурацией запуска,
JSON-артефакты хранят ее под ключом config. Вывод не зависит от времени запуска,
поэтому повторный запуск с теми же входами дает побайтно те же файлы.
"""
import json
import logging
import math
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.models.models import (
    DetPoint,
    EmbeddingRecord,
    MorphComparisonSet,
    MorphPair,
    MorphRecord,
    ScoreLabel,
    ScoreSample,
    SelectionMethod,
)
from src.services.calibration.calibration_service import apply_orientation
from src.services.data_loader.loader_service import CONFIG_PREFIX, config_line
from src.services.errors import DataError, EmptyInputError, MalformedRecordError
from src.services.similarity.similarity_service import mated_morph_scores

logger = logging.getLogger(__name__)

PAIR_COLUMNS = ['subject_a', 'subject_b', 'distance', 'method']
SCORE_COLUMNS = ['label', 'score', 'id_a', 'id_b']
COMPARISON_COLUMNS = ['morph_id', 'frs_id', 'subject_slot', 'probe_index', 'distance']


def write_csv(frame: pd.DataFrame, path: Path, config: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(config_line(config))
        frame.to_csv(f, index=False, lineterminator='\n')
    logger.info(f"Записан {path} ({len(frame)} строк)")
    return path


def read_csv(path: Path, columns: Sequence[str], dtype: Optional[dict] = None) -> pd.DataFrame:
    """Чтение CSV с необязательной строкой конфигурации и проверкой набора колонок"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")

    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
    skip = 1 if first.startswith(CONFIG_PREFIX) else 0

    try:
        frame = pd.read_csv(path, skiprows=skip, dtype=dtype)
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError(f"Пустой файл: {path}") from e

    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: нет колонок {', '.join(missing)}")
    return frame


def read_config(path: Path) -> dict:
    """Конфигурация, записанная в первую строку CSV (пустой словарь, если строки нет)"""
    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
    if not first.startswith(CONFIG_PREFIX):
        return {}
    return json.loads(first[len(CONFIG_PREFIX):])


def write_json(data: dict, path: Path, config: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(data)
    if config is not None:
        payload['config'] = config
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write('\n')
    logger.info(f"Записан {path}")
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: некорректный JSON ({e.msg})") from e


# Пары

def write_pairs(pairs: Sequence[MorphPair], path: Path, config: Optional[dict] = None) -> Path:
    frame = pd.DataFrame([p.to_dict() for p in pairs], columns=PAIR_COLUMNS)
    return write_csv(frame, path, config)


def read_pairs(path: Path) -> List[MorphPair]:
    frame = read_csv(path, PAIR_COLUMNS, dtype={'subject_a': str, 'subject_b': str, 'method': str})
    pairs = []
    for row in frame.itertuples(index=False):
        try:
            method = SelectionMethod(row.method)
        except ValueError as e:
            raise DataError(f"{path}: неизвестный метод подбора {row.method}") from e
        distance = None if pd.isna(row.distance) else float(row.distance)
        pairs.append(MorphPair(
            subject_a=row.subject_a,
            subject_b=row.subject_b,
            distance=distance,
            selection_method=method,
        ))
    return pairs


# Оценки сравнений

def write_scores(samples: Iterable[ScoreSample], path: Path, config: Optional[dict] = None) -> Path:
    frame = pd.DataFrame([s.to_dict() for s in samples], columns=SCORE_COLUMNS)
    return write_csv(frame, path, config)


def read_scores(path: Path, orientation: str = 'distance') -> Tuple[List[float], List[float]]:
    """(mated, non-mated) оценки файла; оценки сходства переводятся в расстояния"""
    frame = read_csv(path, SCORE_COLUMNS, dtype={'label': str, 'id_a': str, 'id_b': str})

    labels = set(frame['label'])
    unknown = labels - {label.value for label in ScoreLabel}
    if unknown:
        raise DataError(f"{path}: неизвестные метки {', '.join(sorted(unknown))}")

    scores = apply_orientation(frame['score'].to_numpy(dtype=np.float64), orientation)
    if not np.all(np.isfinite(scores)):
        raise DataError(f"{path}: нечисловые оценки")

    mated = scores[(frame['label'] == ScoreLabel.MATED.value).to_numpy()]
    nonmated = scores[(frame['label'] == ScoreLabel.NON_MATED.value).to_numpy()]
    return mated.tolist(), nonmated.tolist()


def write_det(points: Sequence[DetPoint], path: Path, config: Optional[dict] = None) -> Path:
    frame = pd.DataFrame(
        [(p.threshold, p.fmr, p.fnmr) for p in points],
        columns=['threshold', 'fmr', 'fnmr'],
    )
    return write_csv(frame, path, config)


def write_ecdf(points: Sequence[Tuple[float, float]], path: Path, config: Optional[dict] = None) -> Path:
    frame = pd.DataFrame(points, columns=['score', 'ecdf'])
    return write_csv(frame, path, config)


# Сравнения морфов

def comparison_rows(
    frs_id: str,
    morphs: Sequence[MorphRecord],
    probes: Dict[str, Sequence[EmbeddingRecord]],
) -> List[dict]:
    """Строки контракта сравнений: каждый морф против всех проб обоих субъектов"""
    rows = []
    for morph in morphs:
        for slot, subject_id in enumerate(morph.subjects, 1):
            subject_probes = probes.get(subject_id)
            if not subject_probes:
                raise DataError(f"FRS {frs_id}: нет проб субъекта {subject_id} для морфа {morph.morph_id}")
            for index, sample in enumerate(mated_morph_scores(morph, subject_probes)):
                rows.append({
                    "morph_id": morph.morph_id,
                    "frs_id": frs_id,
                    "subject_slot": slot,
                    "probe_index": index,
                    "distance": sample.score,
                })
    return rows


def write_comparisons(rows: Sequence[dict], path: Path, config: Optional[dict] = None) -> Path:
    return write_csv(pd.DataFrame(list(rows), columns=COMPARISON_COLUMNS), path, config)


def comparisons_to_sets(frame: pd.DataFrame, orientation: str = 'distance') -> List[MorphComparisonSet]:
    """Группировка строк сравнений в наборы по морфам.

    Морфы идут в порядке первого появления, субъекты по номеру слота,
    пробы по probe_index.
    """
    if frame.empty:
        raise EmptyInputError("Нет ни одного сравнения морфа")

    distances = apply_orientation(frame['distance'].to_numpy(dtype=np.float64), orientation)
    if not np.all(np.isfinite(distances)):
        raise DataError("Нечисловые расстояния в сравнениях морфов")

    frame = frame.assign(distance=distances)
    if frame.duplicated(subset=['morph_id', 'frs_id', 'subject_slot', 'probe_index']).any():
        raise DataError("Повтор строки сравнения (morph_id, frs_id, subject_slot, probe_index)")

    slots = set(frame['subject_slot'].tolist())
    if not slots <= {1, 2}:
        raise DataError(f"subject_slot должен быть 1 или 2, получено {sorted(slots)}")

    ordered = frame.sort_values(['subject_slot', 'probe_index'], kind='stable')
    sets: 'OrderedDict[str, Dict[str, Dict[int, List[float]]]]' = OrderedDict(
        (morph_id, {}) for morph_id in pd.unique(frame['morph_id'])
    )
    for row in ordered.itertuples(index=False):
        by_slot = sets[row.morph_id].setdefault(row.frs_id, {})
        by_slot.setdefault(int(row.subject_slot), []).append(float(row.distance))

    result = []
    for morph_id, by_frs in sets.items():
        scores = {}
        for frs_id in sorted(by_frs):
            by_slot = by_frs[frs_id]
            if sorted(by_slot) != [1, 2]:
                raise DataError(f"Морф {morph_id}, FRS {frs_id}: нужны оценки обоих субъектов")
            scores[frs_id] = tuple(tuple(by_slot[slot]) for slot in sorted(by_slot))
        result.append(MorphComparisonSet(morph_id=str(morph_id), scores=scores))

    logger.info(f"Сравнения морфов: {len(result)} морфов, {len(frame)} строк")
    return result


def read_comparisons(path: Path, orientation: str = 'distance') -> List[MorphComparisonSet]:
    frame = read_csv(path, COMPARISON_COLUMNS, dtype={'morph_id': str, 'frs_id': str})
    return comparisons_to_sets(frame, orientation)


# Морфы

def write_morphs(morphs: Iterable[MorphRecord], path: Path, config: Optional[dict] = None) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        if config is not None:
            f.write(config_line(config))
        for morph in morphs:
            f.write(morph.model_dump_json())
            f.write('\n')
            count += 1
    logger.info(f"Записано {count} морфов в {path}")
    return count


def read_morphs(path: Path) -> List[MorphRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл не найден: {path}")

    morphs = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip() or line.startswith('#'):
                continue
            try:
                morph = MorphRecord.model_validate_json(line)
            except ValueError as e:
                raise MalformedRecordError(f"некорректная запись морфа: {e}", line_no) from e
            if not all(math.isfinite(v) for v in morph.embedding):
                raise MalformedRecordError(f"морф {morph.morph_id} содержит NaN или Inf", line_no)
            morphs.append(morph)
    return morphs
