import itertools

import numpy as np
import pytest

from src.models.models import MorphRecord, ScoreLabel
from src.services.errors import DataError, DimensionMismatchError, InsufficientDataError, ZeroNormError
from src.services.similarity.similarity_service import (
    build_score_matrix,
    cosine_distance,
    mated_morph_scores,
    mated_scores,
    nonmated_scores,
    record_id,
    sample_subjects,
)


@pytest.mark.parametrize('a, b, expected', [
    ([1, 0], [1, 0], 0.0),
    ([1, 0], [0, 1], 1.0),
    ([1, 0], [-1, 0], 2.0),
])
def test_cosine_distance_examples(a, b, expected):
    assert cosine_distance(a, b) == pytest.approx(expected)


def test_cosine_distance_scale_invariant_and_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, y = rng.standard_normal(8), rng.standard_normal(8)
        c = rng.uniform(0.01, 100)
        assert cosine_distance(x, c * x) == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance(x, y) == pytest.approx(cosine_distance(y, x))
        assert 0.0 <= cosine_distance(x, y) <= 2.0


def test_cosine_distance_errors():
    with pytest.raises(ZeroNormError):
        cosine_distance([0, 0], [1, 0])
    with pytest.raises(DimensionMismatchError):
        cosine_distance([1, 0], [1, 0, 0])


def test_score_matrix_masks_lower_triangle():
    matrix = build_score_matrix({'s1': [1, 0], 's2': [0, 1], 's3': [1, 0]})

    assert matrix.unmasked_count() == 3
    assert np.all(np.isnan(matrix.values[np.tril_indices(3)]))
    assert matrix.distance(0, 1) == pytest.approx(1.0)
    assert matrix.distance(0, 2) == pytest.approx(0.0)
    assert matrix.distance(1, 2) == pytest.approx(1.0)


def test_score_matrix_matches_double_loop():
    rng = np.random.default_rng(7)
    for n in range(2, 12):
        subjects = {f's{k}': rng.standard_normal(5) for k in range(n)}
        matrix = build_score_matrix(subjects)

        assert matrix.unmasked_count() == n * (n - 1) // 2
        ids = list(subjects)
        for i, j in itertools.combinations(range(n), 2):
            expected = cosine_distance(subjects[ids[i]], subjects[ids[j]])
            assert matrix.distance(i, j) == pytest.approx(expected, abs=1e-12)


def test_score_matrix_needs_two_subjects():
    with pytest.raises(InsufficientDataError):
        build_score_matrix({'s1': [1, 0]})


def test_mated_scores(make_record):
    records = (
        [make_record('s1', f'a{k}', k, embedding=(1, k, 0, 0)) for k in range(3)]
        + [make_record('s2', 'b0', 0), make_record('s2', 'b1', 1)]
        + [make_record('s3', 'c0', 0)]
    )

    scores = mated_scores(records)

    assert len(scores) == 4
    assert all(s.label is ScoreLabel.MATED for s in scores)
    # у s2 одинаковые эмбеддинги
    assert scores[-1].score == pytest.approx(0.0)


def test_nonmated_single_cross_pair(make_record):
    records = [make_record('s1', 'a', embedding=(1, 0, 0, 0)), make_record('s2', 'b', embedding=(0, 1, 0, 0))]

    (sample,) = nonmated_scores(records, 1, seed=0)

    assert (sample.id_a, sample.id_b) == ('s1/a', 's2/b')
    assert sample.label is ScoreLabel.NON_MATED
    assert sample.score == pytest.approx(1.0)


def test_nonmated_full_population_is_every_cross_pair(small_population):
    records = small_population[:20]
    subject_of = {record_id(r): r.subject_id for r in records}
    expected = {
        frozenset((record_id(a), record_id(b)))
        for a, b in itertools.combinations(records, 2)
        if a.subject_id != b.subject_id
    }

    scores = nonmated_scores(records, len(expected), seed=5)

    assert {frozenset((s.id_a, s.id_b)) for s in scores} == expected
    assert len(scores) == len(expected)
    assert all(subject_of[s.id_a] != subject_of[s.id_b] for s in scores)


def test_score_ids_distinguish_subjects_sharing_sample_ids(make_record):
    records = [
        make_record(s, str(k), k, embedding=(1.0, float(k), i, 0.0))
        for i, s in enumerate(['s1', 's2'])
        for k in range(2)
    ]
    morph = MorphRecord(
        morph_id='m1', subject_a='s1', subject_b='s2',
        selection_method='embedding', morpher='midpoint', embedding=(1.0, 0.5, 0.5, 0.0),
    )

    mated = mated_scores(records)
    nonmated = nonmated_scores(records, 4, seed=0)
    morph_scores = mated_morph_scores(morph, records)

    assert [(s.id_a, s.id_b) for s in mated] == [('s1/0', 's1/1'), ('s2/0', 's2/1')]
    assert {frozenset((s.id_a, s.id_b)) for s in nonmated} == {
        frozenset((f's1/{p}', f's2/{q}')) for p in '01' for q in '01'
    }
    assert [s.id_b for s in morph_scores] == ['s1/0', 's1/1', 's2/0', 's2/1']


def test_nonmated_deterministic_per_seed(small_population):
    first = nonmated_scores(small_population, 100, seed=11)
    second = nonmated_scores(small_population, 100, seed=11)
    other = nonmated_scores(small_population, 100, seed=12)

    assert first == second
    assert first != other


def test_nonmated_count_exceeds_population(make_record):
    records = [make_record('s1', 'a'), make_record('s2', 'b')]

    with pytest.raises(DataError):
        nonmated_scores(records, 2, seed=0)


def test_sample_subjects(small_population):
    subset = sample_subjects(small_population, 10, seed=2)

    assert len({r.subject_id for r in subset}) == 10
    assert subset == sample_subjects(small_population, 10, seed=2)
    assert sample_subjects(small_population, 500, seed=2) == small_population
