"""RBF-SVM с мягким зазором, обучаемый SMO с выбором максимально нарушающей пары.

Двойственная задача в знаковой форме: коэффициенты a_k = alpha_k * y_k,
A_k <= a_k <= B_k, где A_k = min(0, C y_k), B_k = max(0, C y_k), sum(a) = 0.
Градиент g_k = y_k - sum_l a_l K(x_k, x_l). Остановка, когда
max{g_i : a_i < B_i} - min{g_j : a_j > A_j} <= tol, смещение b = (g_i + g_j) / 2.
Если лимит итераций исчерпан, b - среднее g по свободным точкам (A_k < a_k < B_k).
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.services.errors import InsufficientDataError

logger = logging.getLogger(__name__)

# замена нулевой кривизны для совпадающих точек
_MIN_CURVATURE = 1e-12

# до такого числа обучающих точек матрица ядра считается целиком
_FULL_KERNEL_LIMIT = 6000


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> np.ndarray:
    """k(x, z) = exp(-gamma * |x - z|^2) для всех пар строк"""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    sq = (
        np.sum(x * x, axis=1)[:, np.newaxis]
        + np.sum(z * z, axis=1)[np.newaxis, :]
        - 2.0 * (x @ z.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(features: np.ndarray) -> float:
    """1 / (D * средняя по измерениям дисперсия)"""
    features = np.asarray(features, dtype=np.float64)
    variance = float(features.var(axis=0).mean())
    if variance <= 0:
        return 1.0
    return 1.0 / (features.shape[1] * variance)


class _KernelColumns:
    def __init__(self, features: np.ndarray, gamma: float):
        self.features = features
        self.gamma = gamma
        n = features.shape[0]
        self._full = rbf_kernel(features, features, gamma) if n <= _FULL_KERNEL_LIMIT else None
        self._cache: dict[int, np.ndarray] = {}

    def column(self, k: int) -> np.ndarray:
        if self._full is not None:
            return self._full[:, k]
        col = self._cache.get(k)
        if col is None:
            if len(self._cache) >= 512:
                self._cache.pop(next(iter(self._cache)))
            col = rbf_kernel(self.features, self.features[k], self.gamma)[:, 0]
            self._cache[k] = col
        return col


def _intercept(a: np.ndarray, g: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    """Смещение по текущему градиенту: среднее g по свободным точкам, иначе середина допустимого отрезка"""
    free = (a > lower) & (a < upper)
    if free.any():
        return float(g[free].mean())
    up_max = np.max(g[a < upper], initial=-np.inf)
    low_min = np.min(g[a > lower], initial=np.inf)
    if not np.isfinite(up_max) or not np.isfinite(low_min):
        return float(up_max if np.isfinite(up_max) else low_min)
    return float((up_max + low_min) / 2.0)


@dataclass
class SmoResult:
    coefficients: np.ndarray  # a_k = alpha_k * y_k по всем обучающим точкам
    bias: float
    iterations: int
    converged: bool
    gap: float


def solve_smo(
    features: np.ndarray,
    labels: np.ndarray,
    C: float = 1.0,
    gamma: float = 1.0,
    tol: float = 1e-3,
    max_iterations: int = 100_000,
    seed: int = 0,
) -> SmoResult:
    """SMO; от seed зависит только порядок точек, то есть разрешение равенств при выборе пары"""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.size

    if set(np.unique(labels).tolist()) != {-1.0, 1.0}:
        raise InsufficientDataError("Для обучения нужны оба класса (метки -1 и +1)")
    if C <= 0:
        raise ValueError(f"C должен быть > 0, получено {C}")

    order = np.random.default_rng(seed).permutation(n)
    x, y = features[order], labels[order]
    kernel = _KernelColumns(x, gamma)

    lower = np.minimum(0.0, C * y)
    upper = np.maximum(0.0, C * y)
    a = np.zeros(n)
    g = y.copy()

    converged = False
    gap = np.inf
    iterations = 0
    i = j = 0

    while iterations < max_iterations:
        up = a < upper
        low = a > lower
        i = int(np.argmax(np.where(up, g, -np.inf)))
        j = int(np.argmin(np.where(low, g, np.inf)))

        gap = g[i] - g[j]
        if gap <= tol:
            converged = True
            break

        k_i = kernel.column(i)
        k_j = kernel.column(j)
        curvature = max(k_i[i] + k_j[j] - 2.0 * k_i[j], _MIN_CURVATURE)
        step = min(upper[i] - a[i], a[j] - lower[j], gap / curvature)

        a[i] = min(a[i] + step, upper[i])
        a[j] = max(a[j] - step, lower[j])
        g -= step * (k_i - k_j)
        iterations += 1

    if converged:
        bias = float((g[i] + g[j]) / 2.0)
        logger.info(f"SMO сошелся за {iterations} итераций, зазор KKT {gap:.2e}")
    else:
        # i, j выбраны до последнего шага, g уже обновлен
        up = a < upper
        low = a > lower
        gap = float(np.max(g[up], initial=-np.inf) - np.min(g[low], initial=np.inf))
        bias = _intercept(a, g, lower, upper)
        logger.warning(f"SMO не сошелся за {max_iterations} итераций, зазор KKT {gap:.2e}")

    coefficients = np.empty(n)
    coefficients[order] = a
    return SmoResult(
        coefficients=coefficients,
        bias=bias,
        iterations=iterations,
        converged=converged,
        gap=float(gap),
    )


def kkt_violations(
    coefficients: np.ndarray,
    labels: np.ndarray,
    decision_values: np.ndarray,
    C: float,
) -> np.ndarray:
    """Нарушение условий KKT в каждой обучающей точке (0, если условие выполнено).

    Точка, чей коэффициент может расти, требует y - f(x) <= 0,
    точка, чей коэффициент может убывать, требует y - f(x) >= 0.
    """
    y = np.asarray(labels, dtype=np.float64)
    a = np.asarray(coefficients, dtype=np.float64)
    residual = y - np.asarray(decision_values, dtype=np.float64)

    can_grow = a < np.maximum(0.0, C * y)
    can_shrink = a > np.minimum(0.0, C * y)

    violation = np.zeros_like(residual)
    violation = np.where(can_grow, np.maximum(violation, residual), violation)
    violation = np.where(can_shrink, np.maximum(violation, -residual), violation)
    return violation


@dataclass
class SvmSolution:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    support_indices: np.ndarray
    converged: bool
    iterations: int
    kkt_violation: float

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        if self.support_vectors.shape[0] == 0:
            return np.full(np.atleast_2d(features).shape[0], self.bias)
        kernel = rbf_kernel(features, self.support_vectors, self.gamma)
        return kernel @ self.dual_coef + self.bias


def fit_svm(
    features: np.ndarray,
    labels: np.ndarray,
    C: float = 1.0,
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    max_iterations: int = 100_000,
    seed: int = 0,
) -> SvmSolution:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if gamma is None:
        gamma = default_gamma(features)

    result = solve_smo(features, labels, C, gamma, tol, max_iterations, seed)

    support = np.flatnonzero(result.coefficients != 0)
    solution = SvmSolution(
        support_vectors=features[support],
        dual_coef=result.coefficients[support],
        bias=result.bias,
        gamma=float(gamma),
        C=float(C),
        support_indices=support,
        converged=result.converged,
        iterations=result.iterations,
        kkt_violation=0.0,
    )

    decision = solution.decision_function(features)
    solution.kkt_violation = float(kkt_violations(result.coefficients, labels, decision, C).max())
    logger.info(
        f"SVM: {support.size} опорных векторов из {labels.size}, gamma={gamma:.4g}, "
        f"макс. нарушение KKT {solution.kkt_violation:.2e}"
    )
    return solution
