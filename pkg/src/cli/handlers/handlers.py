import argparse
import logging
import re
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from src.cli.router import Router, arg
from src.config.config import settings
from src.models.models import SelectionMethod
from src.services.artifacts.artifact_service import (
    comparison_rows,
    read_comparisons,
    read_json,
    read_morphs,
    read_pairs,
    read_scores,
    write_comparisons,
    write_csv,
    write_det,
    write_ecdf,
    write_json,
    write_morphs,
    write_pairs,
    write_scores,
)
from src.services.calibration.calibration_service import ORIENTATIONS, calibrate, calibrate_embeddings
from src.services.data_loader.loader_service import (
    dump_dataset,
    filter_min_samples,
    load_dataset,
    split_roles,
    subject_metadata,
)
from src.services.dmad.dmad_service import (
    BONA_FIDE,
    MORPH,
    bpcer,
    bpcer_at_macer,
    build_training_sets,
    dmad_det,
    dmad_eer,
    fit_dmad,
    load_model,
    macer,
    save_model,
    subject_differentials,
)
from src.services.errors import DataError, InsufficientDataError, UsageError
from src.services.pair_selection.pair_service import random_pairs, select_pairs
from src.services.similarity.similarity_service import build_score_matrix
from src.services.synthgen.synth_service import SynthConfig, generate_morphs, generate_population
from src.services.vulnerability.map_service import average_maps, default_map_weights, map_avg, map_matrix
from src.services.vulnerability.metrics_service import (
    SUBJECT_RULES,
    ecdf_points,
    evaluate_vulnerability,
    scores_for_frs,
)

router = Router()
logger = logging.getLogger(__name__)

_FRS_NAME = re.compile(r'^[A-Za-z0-9_.-]+$')

# в конфигурацию артефактов не попадают
_RUNTIME_KEYS = {'handler', 'log_level', 'log_file'}


def frs_source(value: str) -> Tuple[str, Path]:
    """NAME=PATH для файла эмбеддингов одной FRS"""
    name, sep, path = value.partition('=')
    if not sep or not path:
        raise argparse.ArgumentTypeError(f"ожидается NAME=PATH, получено {value!r}")
    if not _FRS_NAME.match(name):
        raise argparse.ArgumentTypeError(f"недопустимое имя FRS {name!r}")
    return name, Path(path)


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def run_config(args: argparse.Namespace) -> dict:
    """Полная конфигурация запуска для записи в артефакты"""
    return {
        key: _plain(value)
        for key, value in sorted(vars(args).items())
        if key not in _RUNTIME_KEYS
    }


def _output_dir(args: argparse.Namespace) -> Path:
    return Path(args.output_dir) if args.output_dir else settings.output_path


def _load_curated(path: Path, dim, min_samples: int):
    if min_samples < 1:
        raise UsageError(f"--min-samples должен быть >= 1, получено {min_samples}")
    if dim is not None and dim < 1:
        raise UsageError(f"--dim должен быть >= 1, получено {dim}")
    return filter_min_samples(load_dataset(path, dim), min_samples)


def _read_thresholds(paths: List[Path]) -> Tuple[Dict[str, float], Dict[str, float]]:
    thresholds, fnmrs = {}, {}
    for path in paths:
        data = read_json(path)
        try:
            frs_id = data['frs_id']
            thresholds[frs_id] = float(data['tau'])
            fnmrs[frs_id] = float(data['fnmr'])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: не найдено поле калибровки ({e})") from e
    return thresholds, fnmrs


_common_input = [
    arg('--dim', type=int, default=None, help='размерность эмбеддингов (по умолчанию - по первой записи)'),
    arg('--min-samples', type=int, default=settings.MIN_SAMPLES, help='минимум снимков на субъекта'),
]


@router.command(
    'simulate', 'Синтетические эмбеддинги для проверки всего конвейера',
    arg('--subjects', type=int, default=200),
    arg('--samples', type=int, default=5, help='снимков на субъекта'),
    arg('--dim', type=int, default=64),
    arg('--sigma', type=float, default=0.8, help='внутриклассовый разброс направлений'),
    arg('--m-min', type=float, default=10.0),
    arg('--m-max', type=float, default=110.0),
    arg('--genders', type=int, default=2),
    arg('--ethnicities', type=int, default=3),
    arg('--age-min', type=int, default=18),
    arg('--age-max', type=int, default=70),
    arg('--seed', type=int, default=settings.DEFAULT_SEED),
    arg('--output', type=Path, default=None, help='файл JSON Lines'),
)
def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        config = SynthConfig(
            n_subjects=args.subjects,
            samples_per_subject=args.samples,
            dim=args.dim,
            sigma=args.sigma,
            m_min=args.m_min,
            m_max=args.m_max,
            n_genders=args.genders,
            n_ethnicities=args.ethnicities,
            age_min=args.age_min,
            age_max=args.age_max,
            seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e

    output = args.output or settings.output_path / 'embeddings.jsonl'
    dump_dataset(generate_population(config), output, {**run_config(args), "synth": config.to_dict()})
    return 0


@router.command(
    'pair', 'Подбор пар субъектов для морфинга',
    arg('--mode', choices=[m.value for m in SelectionMethod], default=SelectionMethod.EMBEDDING.value),
    arg('--embeddings', type=Path, required=True, help='эмбеддинги FRS предотбора'),
    *_common_input,
    arg('--max-age-gap', type=int, default=settings.MAX_AGE_GAP),
    arg('--seed', type=int, default=settings.DEFAULT_SEED),
    arg('--output', type=Path, default=None),
)
def cmd_pair(args: argparse.Namespace) -> int:
    if args.max_age_gap < 0:
        raise UsageError("--max-age-gap должен быть >= 0")

    records = _load_curated(args.embeddings, args.dim, args.min_samples)
    metadata = subject_metadata(records)

    if args.mode == SelectionMethod.EMBEDDING.value:
        sources = {split.subject_id: split.morph_source.vector for split in split_roles(records)}
        pairs = select_pairs(build_score_matrix(sources), metadata, args.max_age_gap)
    else:
        pairs = random_pairs(metadata, args.max_age_gap, args.seed)

    write_pairs(pairs, args.output or settings.output_path / 'pairs.csv', run_config(args))
    return 0


@router.command(
    'morph', 'Морфы по списку пар и их сравнения с пробами для каждой FRS',
    arg('--pairs', type=Path, required=True),
    arg('--frs', type=frs_source, action='append', required=True, metavar='NAME=PATH'),
    *_common_input,
    arg('--noise', type=float, default=0.0, help='шум направления морфа'),
    arg('--morpher', default='midpoint'),
    arg('--seed', type=int, default=settings.DEFAULT_SEED),
    arg('--output-dir', type=Path, default=None),
)
def cmd_morph(args: argparse.Namespace) -> int:
    pairs = read_pairs(args.pairs)
    if not pairs:
        raise InsufficientDataError(f"{args.pairs}: нет ни одной пары")

    output_dir = _output_dir(args)
    config = run_config(args)
    rows = []
    for frs_id, path in args.frs:
        records = _load_curated(path, args.dim, args.min_samples)
        probes = {split.subject_id: split.probes for split in split_roles(records)}
        morphs = generate_morphs(records, pairs, args.noise, args.seed, args.morpher)
        write_morphs(morphs, output_dir / f'morphs-{frs_id}.jsonl', config)
        rows.extend(comparison_rows(frs_id, morphs, probes))

    write_comparisons(rows, output_dir / f'comparisons-{args.morpher}.csv', config)
    return 0


@router.command(
    'calibrate', 'Порог FRS при заданном FMR и DET-кривая',
    arg('--frs', type=frs_source, default=None, metavar='NAME=PATH', help='эмбеддинги FRS'),
    arg('--scores', type=Path, default=None, help='готовые оценки label,score,id_a,id_b'),
    arg('--frs-id', default=None, help='имя FRS для --scores'),
    arg('--orientation', choices=ORIENTATIONS, default='distance'),
    *_common_input,
    arg('--fmr', type=float, default=settings.TARGET_FMR),
    arg('--subset', type=int, default=settings.CALIBRATION_SUBJECTS, help='субъектов в калибровочной выборке'),
    arg('--nonmated', type=int, default=None, help='число non-mated сравнений (по умолчанию как mated)'),
    arg('--seed', type=int, default=settings.DEFAULT_SEED),
    arg('--output-dir', type=Path, default=None),
)
def cmd_calibrate(args: argparse.Namespace) -> int:
    if (args.frs is None) == (args.scores is None):
        raise UsageError("Нужен ровно один источник: --frs или --scores")
    if not 0 <= args.fmr < 1:
        raise UsageError(f"--fmr должен быть в [0, 1), получено {args.fmr}")

    output_dir = _output_dir(args)
    config = run_config(args)

    if args.frs is not None:
        frs_id, path = args.frs
        records = _load_curated(path, args.dim, args.min_samples)
        result, mated, nonmated = calibrate_embeddings(
            frs_id, records, args.fmr, args.subset, args.seed, args.nonmated
        )
        write_scores(mated + nonmated, output_dir / f'scores-{frs_id}.csv', config)
    else:
        frs_id = args.frs_id or args.scores.stem
        if not _FRS_NAME.match(frs_id):
            raise UsageError(f"Недопустимое имя FRS {frs_id!r}")
        mated, nonmated = read_scores(args.scores, args.orientation)
        result = calibrate(frs_id, mated, nonmated, args.fmr)

    write_json(result.to_dict(), output_dir / f'calibration-{frs_id}.json', config)
    write_det(result.det_points, output_dir / f'det-{frs_id}.csv', config)
    return 0


@router.command(
    'vuln', 'MMPMR, prodAvgMMPMR и RMMR по сравнениям морфов',
    arg('--comparisons', type=Path, required=True),
    arg('--calibration', type=Path, action='append', required=True, help='calibration-<frs>.json'),
    arg('--orientation', choices=ORIENTATIONS, default='distance'),
    arg('--preselection', default=SelectionMethod.EMBEDDING.value),
    arg('--morpher', default='midpoint'),
    arg('--subject-rule', choices=SUBJECT_RULES, default='all', help='правило MMPMR для RMMR'),
    arg('--output-dir', type=Path, default=None),
)
def cmd_vuln(args: argparse.Namespace) -> int:
    morphs = read_comparisons(args.comparisons, args.orientation)
    thresholds, fnmrs = _read_thresholds(args.calibration)

    reports = evaluate_vulnerability(
        morphs, thresholds, fnmrs, args.preselection, args.morpher, args.subject_rule
    )

    output_dir = _output_dir(args)
    config = run_config(args)
    write_csv(pd.DataFrame([r.to_dict() for r in reports]), output_dir / 'metrics.csv', config)

    for frs_id in sorted(thresholds):
        scores = [d for subjects in scores_for_frs(morphs, frs_id) for probes in subjects for d in probes]
        write_ecdf(ecdf_points(scores), output_dir / f'ecdf-{frs_id}.csv', config)
    return 0


@router.command(
    'map', 'Матрица Morphing Attack Potential и MAPavg',
    arg('--comparisons', type=Path, nargs='+', required=True, help='по файлу на алгоритм морфинга'),
    arg('--calibration', type=Path, action='append', required=True),
    arg('--orientation', choices=ORIENTATIONS, default='distance'),
    arg('--attempts', type=int, default=settings.MAP_ATTEMPTS),
    arg('--frs', action='append', default=None, help='ограничить набор FRS'),
    arg('--paired', action='store_true', help='попытка k успешна только против k-й пробы обоих субъектов'),
    arg('--weights', type=Path, default=None, help='JSON-матрица весов MAPavg размера attempts x FRS'),
    arg('--output', type=Path, default=None),
)
def cmd_map(args: argparse.Namespace) -> int:
    if args.attempts < 1:
        raise UsageError("--attempts должен быть >= 1")

    thresholds, _ = _read_thresholds(args.calibration)
    frs_ids = sorted(args.frs) if args.frs else None

    maps = [
        map_matrix(read_comparisons(path, args.orientation), thresholds, args.attempts, frs_ids, args.paired)
        for path in args.comparisons
    ]
    averaged = average_maps(maps)

    weights_data = None if args.weights is None else read_json(args.weights)
    try:
        if weights_data is None:
            weights = default_map_weights(*averaged.values.shape)
        else:
            weights = np.asarray(weights_data, dtype=np.float64)
        per_file = {
            str(path): {"matrix": result.values.tolist(), "map_avg": map_avg(result, weights)}
            for path, result in zip(args.comparisons, maps)
        }
        data = averaged.to_dict()
        data.update({
            "map_avg": map_avg(averaged, weights),
            "weights": weights.tolist(),
            "per_file": per_file,
        })
    except ValueError as e:
        raise DataError(f"{args.weights}: {e}") from e

    write_json(data, args.output or settings.output_path / 'map.json', run_config(args))
    logger.info(f"MAPavg = {data['map_avg']:.4f}")
    return 0


@router.command(
    'dmad-train', 'Обучение D-MAD на разностях эмбеддингов',
    arg('--embeddings', type=Path, required=True, help='bona fide эмбеддинги FRS детектора'),
    arg('--morphs', type=Path, required=True, help='морфы той же FRS'),
    *_common_input,
    arg('--split', type=float, default=settings.DMAD_SPLIT, help='доля субъектов в обучении'),
    arg('--pairs-per-subject', type=int, default=1),
    arg('--C', dest='C', type=float, default=settings.SVM_C),
    arg('--gamma', type=float, default=None, help='по умолчанию 1 / (D * дисперсия)'),
    arg('--tol', type=float, default=settings.SVM_TOL),
    arg('--max-iterations', type=int, default=settings.SVM_MAX_ITERATIONS),
    arg('--seed', type=int, default=settings.DEFAULT_SEED),
    arg('--output', type=Path, default=None),
)
def cmd_dmad_train(args: argparse.Namespace) -> int:
    if not 0 < args.split < 1:
        raise UsageError(f"--split должен быть в (0, 1), получено {args.split}")
    if args.C <= 0:
        raise UsageError(f"--C должен быть > 0, получено {args.C}")

    records = _load_curated(args.embeddings, args.dim, args.min_samples)
    morphs = read_morphs(args.morphs)

    train, test = build_training_sets(records, morphs, args.split, args.seed, args.pairs_per_subject)
    model = fit_dmad(
        train.features, train.labels, args.C, args.gamma, args.tol, args.max_iterations, args.seed
    )
    model.test_subjects = tuple(sorted(test.subjects))
    model.config = run_config(args)

    save_model(model, args.output or settings.output_path / 'dmad-model.json')
    return 0


@router.command(
    'dmad-eval', 'Оценка D-MAD на отложенных субъектах: DET и BPCER10/20/100',
    arg('--model', type=Path, required=True),
    arg('--embeddings', type=Path, required=True),
    arg('--morphs', type=Path, required=True),
    *_common_input,
    arg('--pairs-per-subject', type=int, default=1),
    arg('--output-dir', type=Path, default=None),
)
def cmd_dmad_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    if not model.test_subjects:
        raise DataError(f"{args.model}: в модели нет отложенных субъектов")

    records = _load_curated(args.embeddings, args.dim, args.min_samples)
    test = subject_differentials(records, read_morphs(args.morphs), model.test_subjects, args.pairs_per_subject)
    if test.features.shape[1] != model.dim:
        raise DataError(f"Размерность признаков {test.features.shape[1]}, модель обучена на {model.dim}")

    scores = model.decision_function(test.features)
    attacks = scores[test.labels == MORPH]
    bona_fide = scores[test.labels == BONA_FIDE]
    if attacks.size == 0 or bona_fide.size == 0:
        raise InsufficientDataError("В отложенной части нет обоих классов")

    output_dir = _output_dir(args)
    config = run_config(args)

    frame = pd.DataFrame({
        "label": np.where(test.labels == MORPH, 'morph', 'bona-fide'),
        "score": scores,
        "id_a": [a for a, _ in test.sources],
        "id_b": [b for _, b in test.sources],
    })
    write_csv(frame, output_dir / 'dmad-scores.csv', config)
    write_csv(
        pd.DataFrame(dmad_det(bona_fide, attacks), columns=['macer', 'bpcer', 'threshold']),
        output_dir / 'dmad-det.csv',
        config,
    )

    eer, eer_threshold = dmad_eer(bona_fide, attacks)
    report = {
        "n_attack": int(attacks.size),
        "n_bona_fide": int(bona_fide.size),
        "macer_at_zero": macer(attacks, 0.0),
        "bpcer_at_zero": bpcer(bona_fide, 0.0),
        "bpcer10": bpcer_at_macer(bona_fide, attacks, 0.10),
        "bpcer20": bpcer_at_macer(bona_fide, attacks, 0.05),
        "bpcer100": bpcer_at_macer(bona_fide, attacks, 0.01),
        "eer": eer,
        "eer_threshold": eer_threshold,
        "converged": model.svm.converged,
    }
    write_json(report, output_dir / 'dmad-report.json', config)

    logger.info("=" * 50)
    logger.info("ОЦЕНКА D-MAD")
    logger.info(f"Атак: {report['n_attack']}, bona fide: {report['n_bona_fide']}")
    logger.info(f"BPCER10={report['bpcer10']:.4f}, BPCER20={report['bpcer20']:.4f}, BPCER100={report['bpcer100']:.4f}")
    logger.info(f"EER={eer:.4f}")
    logger.info("=" * 50)
    return 0
