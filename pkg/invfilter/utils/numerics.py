# invfilter/utils/numerics.py
import logging
import math
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np

from invfilter.models.schemas import Box
from invfilter.utils.config import settings

logger = logging.getLogger(__name__)


def grid_points(box: Box, count: int) -> np.ndarray:
    """Uniform grid with endpoints, about `count` points; a single point is the center"""
    if count < 1:
        raise ValueError("sample count must be at least 1")
    if count == 1:
        return box.center.reshape(1, -1)
    per_axis = max(2, int(math.ceil(count ** (1.0 / box.dim))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def axis_grid(box: Box, points_per_axis: int) -> np.ndarray:
    """Full tensor grid with `points_per_axis` points on every axis"""
    if points_per_axis < 1:
        raise ValueError("points per axis must be at least 1")
    if points_per_axis == 1:
        return box.center.reshape(1, -1)
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(box.lower, box.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def random_points(box: Box, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("sample count must be at least 1")
    if count == 1:
        return box.center.reshape(1, -1)
    return rng.uniform(box.lower, box.upper, size=(count, box.dim))


def boundary_biased_points(
    fn: Callable[[np.ndarray], float],
    box: Box,
    count: int,
    rng: np.random.Generator,
    level: float = 0.0,
    pool_factor: int = 8,
) -> np.ndarray:
    """The `count` points of a random pool where |fn(x) - level| is smallest"""
    if count < 1:
        return np.empty((0, box.dim))
    pool = rng.uniform(box.lower, box.upper, size=(count * pool_factor, box.dim))
    distance = np.array([abs(float(fn(x)) - level) for x in pool])
    order = np.argsort(distance, kind="stable")
    return pool[order[:count]]


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, step: Optional[float] = None) -> np.ndarray:
    step = settings.FD_STEP if step is None else step
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (float(fn(x + e)) - float(fn(x - e))) / (2.0 * step)
    return grad


def check_gradient(
    fn: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    points: Iterable[np.ndarray],
    rtol: Optional[float] = None,
    step: Optional[float] = None,
) -> Tuple[bool, List[np.ndarray]]:
    """Compare an analytic gradient against central differences.

    Returns (ok, mismatching points). Only used for validation, never inside a controller.
    """
    rtol = settings.FD_RTOL if rtol is None else rtol
    bad = []
    for x in points:
        analytic = np.asarray(grad(x), dtype=float).reshape(-1)
        numeric = central_difference(fn, x, step)
        scale = max(1.0, float(np.linalg.norm(numeric)))
        if analytic.shape != numeric.shape or np.linalg.norm(analytic - numeric) > rtol * scale:
            bad.append(np.asarray(x, dtype=float))
    if bad:
        logger.warning(f"Gradient disagrees with finite differences at {len(bad)} point(s)")
    return not bad, bad
