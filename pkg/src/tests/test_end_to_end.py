"""Весь конвейер на синтетических данных: предотбор, калибровка, морфинг, метрики"""
import numpy as np
import pandas as pd
import pytest

from src.services.artifacts.artifact_service import comparison_rows, comparisons_to_sets
from src.services.calibration.calibration_service import calibrate_embeddings
from src.services.data_loader.loader_service import filter_min_samples, split_roles, subject_metadata
from src.services.pair_selection.pair_service import random_pairs, select_pairs
from src.services.similarity.similarity_service import build_score_matrix
from src.services.synthgen.synth_service import SynthConfig, generate_morphs, generate_population
from src.services.vulnerability.map_service import map_avg, map_matrix
from src.services.vulnerability.metrics_service import evaluate_vulnerability

MORPH_NOISE = 1.1


def _population(seed):
    config = SynthConfig(
        n_subjects=400, samples_per_subject=5, dim=64, sigma=0.4,
        n_genders=1, n_ethnicities=1, age_min=30, age_max=34, seed=seed,
    )
    return filter_min_samples(generate_population(config), 5)


def _reports(records, pairs, calibration, seed, preselection):
    probes = {split.subject_id: split.probes for split in split_roles(records)}
    morphs = generate_morphs(records, pairs, MORPH_NOISE, seed, morpher='midpoint')
    sets = comparisons_to_sets(pd.DataFrame(comparison_rows('synth', morphs, probes)))

    thresholds = {'synth': calibration.tau}
    (report,) = evaluate_vulnerability(
        sets, thresholds, {'synth': calibration.fnmr_at_tau}, preselection, 'midpoint'
    )
    return report, map_matrix(sets, thresholds, attempts=4)


@pytest.mark.parametrize('seeds', [range(5)])
def test_embedding_preselection_beats_random(seeds):
    gaps = []
    for seed in seeds:
        records = _population(seed)
        calibration, _, _ = calibrate_embeddings('synth', records, 0.001, subset_size=500, seed=seed)
        assert calibration.achieved_fmr <= 0.001

        metadata = subject_metadata(records)
        sources = {split.subject_id: split.morph_source.vector for split in split_roles(records)}
        selected = select_pairs(build_score_matrix(sources), metadata, 5)
        baseline = random_pairs(metadata, 5, seed)

        embedding_report, embedding_map = _reports(records, selected, calibration, seed, 'embedding')
        random_report, random_map = _reports(records, baseline, calibration, seed, 'random')

        for report in (embedding_report, random_report):
            assert 0.0 <= report.prod_avg_mmpmr <= report.mmpmr_any <= 1.0
            assert report.mmpmr_all <= report.mmpmr_any
            assert report.rmmr == pytest.approx(report.mmpmr_all + report.fnmr)
        for result in (embedding_map, random_map):
            assert np.all(np.diff(result.values, axis=0) <= 0)
            assert 0.0 <= map_avg(result) <= 1.0

        gaps.append(embedding_report.prod_avg_mmpmr - random_report.prod_avg_mmpmr)

    assert np.mean(gaps) >= 0.05
    assert sum(gap > 0 for gap in gaps) >= 4
