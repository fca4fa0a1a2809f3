import json

import pytest

from src.models.models import EmbeddingRecord
from src.services.synthgen.synth_service import SynthConfig, generate_population


@pytest.fixture
def make_record():
    def factory(subject_id, sample_id, capture_index=0, embedding=(1.0, 0.0, 0.0, 0.0),
                age=30, gender='female', ethnicity='group-a'):
        return EmbeddingRecord(
            subject_id=subject_id,
            sample_id=sample_id,
            capture_index=capture_index,
            age=age,
            gender=gender,
            ethnicity=ethnicity,
            embedding=tuple(float(v) for v in embedding),
        )
    return factory


@pytest.fixture
def write_jsonl(tmp_path):
    """Записывает строки (словари или готовый текст) в файл JSON Lines"""
    def writer(lines, name='embeddings.jsonl'):
        path = tmp_path / name
        with open(path, 'w', encoding='utf-8') as f:
            for line in lines:
                f.write(line if isinstance(line, str) else json.dumps(line))
                f.write('\n')
        return path
    return writer


@pytest.fixture
def raw_record():
    def factory(subject_id='s1', sample_id='a', capture_index=0, embedding=(1.0, 0.0, 0.0, 0.0), **extra):
        data = {
            "subject_id": subject_id,
            "sample_id": sample_id,
            "capture_index": capture_index,
            "age": 30,
            "gender": 'female',
            "ethnicity": 'group-a',
            "embedding": list(embedding),
        }
        data.update(extra)
        return data
    return factory


@pytest.fixture(scope='session')
def small_population():
    config = SynthConfig(n_subjects=40, samples_per_subject=5, dim=16, sigma=0.5, seed=3)
    return generate_population(config)
