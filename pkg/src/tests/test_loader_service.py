import pytest

from src.services.data_loader.loader_service import (
    dump_dataset,
    filter_min_samples,
    load_dataset,
    split_roles,
    subject_metadata,
)
from src.services.errors import (
    DimensionMismatchError,
    DuplicateRecordError,
    InsufficientDataError,
    MalformedRecordError,
    NonFiniteEmbeddingError,
)


def test_load_single_record(write_jsonl, raw_record):
    path = write_jsonl([raw_record()])
    records = load_dataset(path, 4)

    assert len(records) == 1
    assert records[0].subject_id == 's1'
    assert records[0].embedding == (1.0, 0.0, 0.0, 0.0)


def test_load_infers_dimension_from_first_record(write_jsonl, raw_record):
    path = write_jsonl([raw_record(), raw_record(sample_id='b', embedding=(1, 2, 3))])

    with pytest.raises(DimensionMismatchError) as exc:
        load_dataset(path)
    assert exc.value.line_no == 2


def test_load_dimension_mismatch(write_jsonl, raw_record):
    path = write_jsonl([raw_record(embedding=(1.0, 0.0, 0.0))])

    with pytest.raises(DimensionMismatchError) as exc:
        load_dataset(path, 4)
    assert exc.value.line_no == 1
    assert 'строка 1' in str(exc.value)


def test_load_duplicate(write_jsonl, raw_record):
    path = write_jsonl([raw_record(), raw_record()])

    with pytest.raises(DuplicateRecordError) as exc:
        load_dataset(path, 4)
    assert exc.value.line_no == 2


def test_load_non_finite(write_jsonl, raw_record):
    line = (
        '{"subject_id": "s1", "sample_id": "a", "capture_index": 0, "age": 30, '
        '"gender": "female", "ethnicity": "group-a", "embedding": [1.0, NaN, 0.0, 0.0]}'
    )
    path = write_jsonl([raw_record(sample_id='ok'), line])

    with pytest.raises(NonFiniteEmbeddingError) as exc:
        load_dataset(path, 4)
    assert exc.value.line_no == 2


@pytest.mark.parametrize('line', [
    '{"subject_id": "s1"',
    '[1, 2, 3]',
    '{"subject_id": "s1", "sample_id": "a", "capture_index": 0, "embedding": [1, 0, 0, 0]}',
    '{"subject_id": "s1", "sample_id": "a", "capture_index": -1, "age": 30, '
    '"gender": "f", "ethnicity": "e", "embedding": [1, 0, 0, 0]}',
])
def test_load_malformed(write_jsonl, line):
    path = write_jsonl([line])

    with pytest.raises(MalformedRecordError) as exc:
        load_dataset(path, 4)
    assert exc.value.line_no == 1


@pytest.mark.parametrize('field, value', [
    ('age', '30'),
    ('age', True),
    ('age', -1),
    ('capture_index', 1.0),
    ('subject_id', 7),
    ('embedding', [1.0, 0.0, True, 0.0]),
])
def test_load_rejects_coercible_values(write_jsonl, raw_record, field, value):
    path = write_jsonl([raw_record(sample_id='ok'), raw_record(sample_id='bad', **{field: value})])

    with pytest.raises(MalformedRecordError) as exc:
        load_dataset(path, 4)
    assert exc.value.line_no == 2


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / 'absent.jsonl', 4)


def test_dump_and_load_roundtrip(tmp_path, small_population):
    path = tmp_path / 'population.jsonl'
    dump_dataset(small_population, path)

    assert load_dataset(path, 16) == small_population


def test_dump_with_config_header(tmp_path, small_population):
    path = tmp_path / 'population.jsonl'
    dump_dataset(small_population, path, {"seed": 3, "dim": 16})

    assert path.read_text(encoding='utf-8').startswith('# config: {"dim": 16, "seed": 3}\n')
    assert load_dataset(path) == small_population


def test_filter_min_samples(make_record):
    records = (
        [make_record('five', f'a{k}', k) for k in range(5)]
        + [make_record('four', f'b{k}', k) for k in range(4)]
        + [make_record('six', f'c{k}', k) for k in range(6)]
    )

    kept = filter_min_samples(records, 5)

    assert {r.subject_id for r in kept} == {'five', 'six'}
    assert len(kept) == 11
    assert filter_min_samples(kept, 5) == kept
    assert filter_min_samples(records, 1) == records


def test_filter_min_samples_rejects_zero(make_record):
    with pytest.raises(ValueError):
        filter_min_samples([make_record('s', 'a')], 0)


def test_split_roles_orders_by_capture(make_record):
    records = [make_record('s1', f'x{k}', k) for k in (3, 1, 2)]

    (split,) = split_roles(records)

    assert split.morph_source.capture_index == 1
    assert [p.capture_index for p in split.probes] == [2, 3]


def test_split_roles_ties_broken_by_sample_id(make_record):
    records = [make_record('s1', 'b', 0), make_record('s1', 'a', 0), make_record('s1', 'c', 1)]

    (split,) = split_roles(records)

    assert split.morph_source.sample_id == 'a'
    assert [p.sample_id for p in split.probes] == ['b', 'c']


def test_split_roles_keeps_every_sample(small_population):
    splits = split_roles(small_population)

    assert len(splits) == 40
    ids = [s.morph_source.sample_id for s in splits] + [p.sample_id for s in splits for p in s.probes]
    assert sorted(ids) == sorted(r.sample_id for r in small_population)
    assert all(len(s.probes) == 4 for s in splits)


def test_split_roles_single_sample(make_record):
    records = [make_record('s1', 'a', 0), make_record('s1', 'b', 1), make_record('s2', 'c', 0)]

    with pytest.raises(InsufficientDataError):
        split_roles(records)


def test_subject_metadata_from_earliest_capture(make_record):
    records = [make_record('s1', 'late', 4, age=40), make_record('s1', 'early', 1, age=35)]

    metadata = subject_metadata(records)

    assert metadata['s1'].age == 35
