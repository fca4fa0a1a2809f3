import numpy as np
import pytest

from src.models.models import MapMatrix, MorphComparisonSet
from src.services.errors import DataError, EmptyInputError
from src.services.vulnerability.map_service import average_maps, default_map_weights, map_avg, map_matrix


def _oracle(morphs, thresholds, frs_ids, attempts):
    """Прямой перебор по определению MAP"""
    values = np.zeros((attempts, len(frs_ids)))
    for i in range(1, attempts + 1):
        for j in range(1, len(frs_ids) + 1):
            qualifying = 0
            for morph in morphs:
                systems = 0
                for f in frs_ids:
                    counts = []
                    for probes in morph.scores[f]:
                        hits = 0
                        for k in range(attempts):
                            if probes[k] < thresholds[f]:
                                hits += 1
                        counts.append(hits)
                    if min(counts) >= i:
                        systems += 1
                if systems >= j:
                    qualifying += 1
            values[i - 1, j - 1] = qualifying / len(morphs)
    return values


def test_map_matrix_example():
    # s-значения: морф 1 -> (2, 1), морф 2 -> (0, 2)
    morphs = [
        MorphComparisonSet('m1', {'f1': ((0.1, 0.2), (0.1, 0.2)), 'f2': ((0.1, 0.9), (0.1, 0.2))}),
        MorphComparisonSet('m2', {'f1': ((0.9, 0.9), (0.1, 0.2)), 'f2': ((0.1, 0.2), (0.2, 0.1))}),
    ]

    result = map_matrix(morphs, {'f1': 0.5, 'f2': 0.5}, attempts=2)

    assert result.values.tolist() == [[1.0, 0.5], [1.0, 0.0]]
    assert result.frs_ids == ('f1', 'f2')
    assert map_avg(result, default_map_weights(2, 2)) == pytest.approx(4 / 9)


@pytest.mark.parametrize('distance, expected', [(0.1, 1.0), (0.9, 0.0)])
def test_map_matrix_all_below_or_above(distance, expected):
    morphs = [
        MorphComparisonSet(f'm{k}', {f: ((distance,) * 4, (distance,) * 4) for f in ('a', 'b', 'c')})
        for k in range(3)
    ]

    result = map_matrix(morphs, {'a': 0.5, 'b': 0.5, 'c': 0.5}, attempts=4)

    assert np.all(result.values == expected)
    assert map_avg(result) == expected


def test_map_matrix_matches_oracle_and_is_monotone():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n_frs = int(rng.integers(1, 4))
        attempts = int(rng.integers(1, 5))
        frs_ids = [f'frs{k}' for k in range(n_frs)]
        thresholds = {f: float(rng.uniform(0.2, 0.8)) for f in frs_ids}
        morphs = [
            MorphComparisonSet(f'm{m}', {
                f: tuple(tuple(rng.uniform(0, 1, attempts + int(rng.integers(0, 3))).tolist()) for _ in range(2))
                for f in frs_ids
            })
            for m in range(int(rng.integers(1, 6)))
        ]

        result = map_matrix(morphs, thresholds, attempts)

        np.testing.assert_allclose(result.values, _oracle(morphs, thresholds, frs_ids, attempts))
        assert np.all(np.diff(result.values, axis=0) <= 0)
        assert np.all(np.diff(result.values, axis=1) <= 0)
        assert np.all((result.values >= 0) & (result.values <= 1))


def test_map_matrix_paired_attempts():
    # у обоих субъектов по одной успешной попытке, но в разных позициях
    morphs = [MorphComparisonSet('m1', {'f1': ((0.1, 0.9), (0.9, 0.1))})]

    assert map_matrix(morphs, {'f1': 0.5}, attempts=2).values.tolist() == [[1.0], [0.0]]
    assert map_matrix(morphs, {'f1': 0.5}, attempts=2, paired=True).values.tolist() == [[0.0], [0.0]]


def test_map_matrix_frs_subset():
    morphs = [MorphComparisonSet('m1', {'a': ((0.1,), (0.1,)), 'b': ((0.9,), (0.9,))})]

    result = map_matrix(morphs, {'a': 0.5, 'b': 0.5}, attempts=1, frs_ids=['a'])

    assert result.frs_ids == ('a',)
    assert result.values.tolist() == [[1.0]]


def test_map_matrix_errors():
    morphs = [MorphComparisonSet('m1', {'a': ((0.1,), (0.1,))})]

    with pytest.raises(DataError):
        map_matrix(morphs, {'a': 0.5}, attempts=2)
    with pytest.raises(DataError):
        map_matrix(morphs, {'b': 0.5}, attempts=1)
    with pytest.raises(EmptyInputError):
        map_matrix([], {'a': 0.5}, attempts=1)


def test_map_avg_weights():
    result = MapMatrix(values=np.array([[1.0, 0.5], [1.0, 0.0]]), frs_ids=('a', 'b'))

    assert map_avg(result, np.ones((2, 2))) == pytest.approx(0.625)
    assert map_avg(MapMatrix(np.zeros((2, 2)), ('a', 'b'))) == 0.0
    with pytest.raises(ValueError):
        map_avg(result, np.ones((3, 2)))
    with pytest.raises(ValueError):
        map_avg(result, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        map_avg(result, -np.ones((2, 2)))


def test_average_maps():
    first = MapMatrix(np.array([[1.0, 0.5]]), ('a', 'b'))
    second = MapMatrix(np.array([[0.0, 0.5]]), ('a', 'b'))

    assert average_maps([first, second]).values.tolist() == [[0.5, 0.5]]
    with pytest.raises(DataError):
        average_maps([first, MapMatrix(np.array([[1.0]]), ('a',))])
