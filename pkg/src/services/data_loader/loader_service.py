import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src.models.models import EmbeddingRecord, SubjectMetadata, SubjectRoleSplit
from src.services.errors import (
    DimensionMismatchError,
    DuplicateRecordError,
    InsufficientDataError,
    MalformedRecordError,
    NonFiniteEmbeddingError,
)

logger = logging.getLogger(__name__)

# первая строка JSON Lines и CSV артефактов с конфигурацией запуска
CONFIG_PREFIX = '# config: '


def config_line(config: Optional[dict]) -> str:
    return CONFIG_PREFIX + json.dumps(config or {}, sort_keys=True, default=str) + '\n'


def load_dataset(path: Path, expected_dim: Optional[int] = None) -> List[EmbeddingRecord]:
    """Загрузка эмбеддингов из JSON Lines с проверкой каждой записи.

    Без expected_dim размерность задает первая запись файла. Строки с # пропускаются.
    """
    path = Path(path)
    logger.info(f"Начало загрузки эмбеддингов из {path}")

    if not path.exists():
        logger.error(f"Файл не найден: {path}")
        raise FileNotFoundError(f"Файл не найден: {path}")

    records: List[EmbeddingRecord] = []
    seen = set()

    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip() or line.startswith('#'):
                continue

            record = _parse_record(line, line_no)
            if expected_dim is None:
                expected_dim = record.dim

            if record.dim != expected_dim:
                raise DimensionMismatchError(
                    f"размерность эмбеддинга {record.dim}, ожидалось {expected_dim}", line_no
                )
            if not np.all(np.isfinite(record.vector)):
                raise NonFiniteEmbeddingError(
                    f"эмбеддинг {record.subject_id}/{record.sample_id} содержит NaN или Inf", line_no
                )

            key = (record.subject_id, record.sample_id)
            if key in seen:
                raise DuplicateRecordError(f"повтор записи {key[0]}/{key[1]}", line_no)
            seen.add(key)
            records.append(record)

            if len(records) % 10000 == 0:
                logger.info(f"Прогресс: прочитано {len(records)} записей")

    subjects = len({r.subject_id for r in records})
    logger.info("=" * 50)
    logger.info("ЗАГРУЗКА ЗАВЕРШЕНА")
    logger.info(f"Записей: {len(records)}")
    logger.info(f"Субъектов: {subjects}")
    logger.info(f"Размерность: {expected_dim}")
    logger.info("=" * 50)

    return records


def _parse_record(line: str, line_no: int) -> EmbeddingRecord:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecordError(f"некорректный JSON: {e.msg}", line_no) from e

    if not isinstance(raw, dict):
        raise MalformedRecordError("запись должна быть JSON-объектом", line_no)

    try:
        return EmbeddingRecord.model_validate(raw)
    except ValidationError as e:
        fields = ', '.join('.'.join(str(p) for p in err['loc']) or '?' for err in e.errors())
        raise MalformedRecordError(f"некорректные поля: {fields}", line_no) from e


def dump_dataset(records: Iterable[EmbeddingRecord], path: Path, config: Optional[dict] = None) -> int:
    """Запись эмбеддингов в JSON Lines (формат load_dataset); config идет строкой-заголовком"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    count = 0
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        if config is not None:
            f.write(config_line(config))
        for record in records:
            f.write(record.model_dump_json())
            f.write('\n')
            count += 1

    logger.info(f"Записано {count} записей в {path}")
    return count


def group_by_subject(records: Iterable[EmbeddingRecord]) -> Dict[str, List[EmbeddingRecord]]:
    groups: Dict[str, List[EmbeddingRecord]] = {}
    for record in records:
        groups.setdefault(record.subject_id, []).append(record)
    return groups


def filter_min_samples(records: Sequence[EmbeddingRecord], min_samples: int) -> List[EmbeddingRecord]:
    """Оставляет только субъектов, у которых не меньше min_samples снимков"""
    if min_samples < 1:
        raise ValueError(f"min_samples должен быть >= 1, получено {min_samples}")

    counts = Counter(r.subject_id for r in records)
    kept = [r for r in records if counts[r.subject_id] >= min_samples]

    kept_subjects = sum(1 for c in counts.values() if c >= min_samples)
    logger.info(
        f"Фильтр min_samples={min_samples}: субъектов {kept_subjects}/{len(counts)}, "
        f"записей {len(kept)}/{len(records)}"
    )
    return kept


def _capture_order(record: EmbeddingRecord):
    # при равном capture_index решает sample_id
    return record.capture_index, record.sample_id


def split_roles(records: Sequence[EmbeddingRecord]) -> List[SubjectRoleSplit]:
    """Первый по времени снимок идет на морфинг, остальные - пробы для верификации"""
    splits = []
    for subject_id, samples in group_by_subject(records).items():
        if len(samples) < 2:
            raise InsufficientDataError(f"У субъекта {subject_id} только один снимок")

        ordered = sorted(samples, key=_capture_order)
        splits.append(SubjectRoleSplit(
            subject_id=subject_id,
            morph_source=ordered[0],
            probes=tuple(ordered[1:]),
        ))
    return splits


def subject_metadata(records: Sequence[EmbeddingRecord]) -> Dict[str, SubjectMetadata]:
    """Демография субъекта берется с самого раннего снимка"""
    metadata = {}
    for subject_id, samples in group_by_subject(records).items():
        first = min(samples, key=_capture_order)
        metadata[subject_id] = SubjectMetadata(
            subject_id=subject_id,
            age=first.age,
            gender=first.gender,
            ethnicity=first.ethnicity,
        )
    return metadata
