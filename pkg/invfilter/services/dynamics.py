# invfilter/services/dynamics.py
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from invfilter.models.schemas import ControlAffineSystem
from invfilter.utils.errors import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)


def _state(system: ControlAffineSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != system.state_dim:
        raise DimensionError(f"{system.name}: state has dimension {x.size}, expected {system.state_dim}")
    return x


def _control(system: ControlAffineSystem, u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != system.control_dim:
        raise DimensionError(f"{system.name}: control has dimension {u.size}, expected {system.control_dim}")
    return u


def drift_at(system: ControlAffineSystem, x: np.ndarray) -> np.ndarray:
    f = np.asarray(system.drift(x), dtype=float).reshape(-1)
    if f.size != system.state_dim:
        raise DimensionError(f"{system.name}: drift returned {f.size} components, expected {system.state_dim}")
    return f


def input_matrix_at(system: ControlAffineSystem, x: np.ndarray) -> np.ndarray:
    g = np.asarray(system.input_matrix(x), dtype=float)
    if g.ndim < 2 and g.size == system.state_dim * system.control_dim:
        # scalar or flat column for single-input systems
        g = g.reshape(system.state_dim, system.control_dim)
    if g.shape != (system.state_dim, system.control_dim):
        raise DimensionError(
            f"{system.name}: input matrix has shape {g.shape}, expected ({system.state_dim}, {system.control_dim})"
        )
    return g


def eval_dynamics(system: ControlAffineSystem, x, u) -> np.ndarray:
    """f(x) + g(x) u"""
    x = _state(system, x)
    u = _control(system, u)
    return drift_at(system, x) + input_matrix_at(system, x) @ u


def vector_fields(system: ControlAffineSystem, x) -> Tuple[np.ndarray, np.ndarray]:
    """(f(x), g(x)) with their shapes checked"""
    x = _state(system, x)
    return drift_at(system, x), input_matrix_at(system, x)


def lie_derivatives(
    grad: Callable[[np.ndarray], np.ndarray],
    system: ControlAffineSystem,
    x,
    fields: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[float, np.ndarray]:
    """(grad . f, grad^T g) at x; `fields` reuses an earlier vector_fields(system, x)"""
    x = _state(system, x)
    f, g = vector_fields(system, x) if fields is None else fields
    dh = np.asarray(grad(x), dtype=float).reshape(-1)
    if dh.size != system.state_dim:
        raise DimensionError(f"gradient has {dh.size} components, expected {system.state_dim}")
    return float(dh @ f), dh @ g


def class_kappa(k_gain: float, y: float) -> float:
    """alpha(y) = y / k, the linear extended class-K function"""
    if not k_gain > 0:
        raise ConfigurationError(f"k_gain must be positive, got {k_gain}")
    return y / k_gain
