import numpy as np
import pytest

from src.models.models import SelectionMethod, SubjectMetadata
from src.services.errors import DataError
from src.services.pair_selection.pair_service import demographic_ok, random_pairs, select_pairs
from src.services.similarity.similarity_service import ScoreMatrix, build_score_matrix


def _metadata(ids, ages=None, genders=None, ethnicities=None):
    n = len(ids)
    ages = ages or [30] * n
    genders = genders or ['female'] * n
    ethnicities = ethnicities or ['group-a'] * n
    return {
        s: SubjectMetadata(subject_id=s, age=a, gender=g, ethnicity=e)
        for s, a, g, e in zip(ids, ages, genders, ethnicities)
    }


def _matrix(ids, distances):
    n = len(ids)
    values = np.full((n, n), np.nan)
    for (i, j), d in distances.items():
        values[i, j] = d
    return ScoreMatrix(subject_ids=tuple(ids), values=values)


def _naive_greedy(matrix, metadata, max_age_gap):
    """Повторный argmin по маскируемой матрице"""
    values = matrix.values.copy()
    n = matrix.size
    pairs = []
    while np.isfinite(values).any():
        i, j = divmod(int(np.nanargmin(values)), n)
        a, b = matrix.subject_ids[i], matrix.subject_ids[j]
        if demographic_ok(metadata[a], metadata[b], max_age_gap):
            pairs.append((a, b))
            for k in (i, j):
                values[k, :] = np.nan
                values[:, k] = np.nan
        else:
            values[i, j] = np.nan
    return pairs


FOUR = ['1', '2', '3', '4']
FOUR_DISTANCES = {(0, 1): 0.1, (0, 2): 0.2, (0, 3): 0.3, (1, 2): 0.4, (1, 3): 0.5, (2, 3): 0.6}


@pytest.mark.parametrize('age_b, expected', [(34, True), (36, False), (35, True)])
def test_demographic_ok_age_gap(age_b, expected):
    a = SubjectMetadata('a', 30, 'female', 'group-a')
    b = SubjectMetadata('b', age_b, 'female', 'group-a')

    assert demographic_ok(a, b, 5) is expected


def test_demographic_ok_requires_same_gender_and_ethnicity():
    a = SubjectMetadata('a', 30, 'female', 'group-a')

    assert not demographic_ok(a, SubjectMetadata('b', 30, 'male', 'group-a'), 5)
    assert not demographic_ok(a, SubjectMetadata('b', 30, 'female', 'group-b'), 5)


def test_select_pairs_greedy_order():
    pairs = select_pairs(_matrix(FOUR, FOUR_DISTANCES), _metadata(FOUR), 5)

    assert [(p.subject_a, p.subject_b) for p in pairs] == [('1', '2'), ('3', '4')]
    assert [p.distance for p in pairs] == [0.1, 0.6]
    assert all(p.selection_method is SelectionMethod.EMBEDDING for p in pairs)


def test_select_pairs_rejected_pair_excludes_only_that_pair():
    metadata = _metadata(FOUR, ages=[30, 50, 30, 50])
    # 1-2 невозможна по возрасту, 3-4 тоже
    pairs = select_pairs(_matrix(FOUR, FOUR_DISTANCES), metadata, 5)

    assert [(p.subject_a, p.subject_b) for p in pairs] == [('1', '3'), ('2', '4')]


def test_select_pairs_two_subjects():
    pairs = select_pairs(build_score_matrix({'a': [1, 0], 'b': [1, 1]}), _metadata(['a', 'b']), 5)

    assert len(pairs) == 1


def test_select_pairs_missing_metadata():
    with pytest.raises(DataError):
        select_pairs(_matrix(FOUR, FOUR_DISTANCES), _metadata(FOUR[:3]), 5)


def test_select_pairs_matches_naive_greedy_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(2, 11))
        ids = [f's{k}' for k in range(n)]
        metadata = _metadata(
            ids,
            ages=rng.integers(20, 32, size=n).tolist(),
            genders=rng.choice(['female', 'male'], size=n).tolist(),
            ethnicities=rng.choice(['group-a', 'group-b'], size=n).tolist(),
        )
        # грубая сетка значений дает много равных расстояний
        distances = {
            (i, j): float(rng.integers(0, 5)) / 4
            for i in range(n) for j in range(i + 1, n)
        }
        matrix = _matrix(ids, distances)

        pairs = select_pairs(matrix, metadata, 5)

        assert [(p.subject_a, p.subject_b) for p in pairs] == _naive_greedy(matrix, metadata, 5)
        used = [s for p in pairs for s in (p.subject_a, p.subject_b)]
        assert len(used) == len(set(used))
        assert all(demographic_ok(metadata[p.subject_a], metadata[p.subject_b], 5) for p in pairs)

        valid = [d for (i, j), d in distances.items() if demographic_ok(metadata[ids[i]], metadata[ids[j]], 5)]
        if valid:
            assert pairs[0].distance == min(valid)
        else:
            assert pairs == []


def test_select_pairs_invariant_to_embedding_magnitude():
    rng = np.random.default_rng(9)
    ids = [f's{k}' for k in range(10)]
    embeddings = {s: rng.standard_normal(6) for s in ids}
    # степени двойки масштабируют без ошибок округления
    scaled = {s: e * 2.0 ** int(rng.integers(-4, 5)) for s, e in embeddings.items()}
    metadata = _metadata(ids)

    assert select_pairs(build_score_matrix(embeddings), metadata, 5) == \
        select_pairs(build_score_matrix(scaled), metadata, 5)


def test_random_pairs_two_compatible_subjects():
    (pair,) = random_pairs(_metadata(['a', 'b']), 5, seed=0)

    assert {pair.subject_a, pair.subject_b} == {'a', 'b'}
    assert pair.distance is None
    assert pair.selection_method is SelectionMethod.RANDOM


def test_random_pairs_incompatible_subjects():
    assert random_pairs(_metadata(['a', 'b'], genders=['female', 'male']), 5, seed=0) == []


def test_random_pairs_deterministic_and_valid():
    rng = np.random.default_rng(4)
    ids = [f's{k}' for k in range(30)]
    metadata = _metadata(ids, ages=rng.integers(20, 40, size=30).tolist(),
                         genders=rng.choice(['female', 'male'], size=30).tolist())

    first = random_pairs(metadata, 5, seed=7)

    assert first == random_pairs(metadata, 5, seed=7)
    used = [s for p in first for s in (p.subject_a, p.subject_b)]
    assert len(used) == len(set(used))
    assert all(demographic_ok(metadata[p.subject_a], metadata[p.subject_b], 5) for p in first)
