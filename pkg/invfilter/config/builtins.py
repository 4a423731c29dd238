# invfilter/config/builtins.py

import logging
from typing import Callable, Dict, List, Mapping, Union

import numpy as np

from invfilter.models.scenario import ParamValue, PolicySection
from invfilter.models.schemas import ControlAffineSystem
from invfilter.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

Policy = Callable[[np.ndarray], np.ndarray]


def _params(name: str, given: Mapping[str, ParamValue], defaults: Dict[str, ParamValue]) -> Dict[str, ParamValue]:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigurationError(f"{name}: unknown parameter(s) {unknown}; accepted: {sorted(defaults)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def _scalar(name: str, key: str, value: ParamValue) -> float:
    if isinstance(value, list):
        raise ConfigurationError(f"{name}: parameter {key} must be a number")
    return float(value)


class BuiltinCatalog:
    """Named systems and nominal policies a scenario file can refer to"""

    @staticmethod
    def system_names() -> List[str]:
        return ["single_integrator_1d", "double_integrator_drift", "unicycle_linearized"]

    @staticmethod
    def single_integrator_1d(decay: float = 0.0, gain: float = 1.0) -> ControlAffineSystem:
        """xdot = -decay * x + gain * u"""
        return ControlAffineSystem(
            name="single_integrator_1d",
            state_dim=1,
            control_dim=1,
            drift=lambda x: np.array([-decay * x[0]]),
            input_matrix=lambda x: np.array([[gain]]),
        )

    @staticmethod
    def double_integrator_drift(damping: float = 0.0) -> ControlAffineSystem:
        """x1dot = x2, x2dot = -damping * x2 + u"""
        return ControlAffineSystem(
            name="double_integrator_drift",
            state_dim=2,
            control_dim=1,
            drift=lambda x: np.array([x[1], -damping * x[1]]),
            input_matrix=lambda x: np.array([[0.0], [1.0]]),
        )

    @staticmethod
    def unicycle_linearized(lookahead: float = 0.1) -> ControlAffineSystem:
        """Unicycle seen through a point `lookahead` ahead of the axle.

        State (px, py, theta) of the look-ahead point; the control is its planar velocity,
        and the heading turns at (-sin(theta) u1 + cos(theta) u2) / lookahead.
        """
        if not lookahead > 0:
            raise ConfigurationError(f"unicycle_linearized: lookahead must be positive, got {lookahead}")

        def input_matrix(x: np.ndarray) -> np.ndarray:
            theta = x[2]
            return np.array(
                [
                    [1.0, 0.0],
                    [0.0, 1.0],
                    [-np.sin(theta) / lookahead, np.cos(theta) / lookahead],
                ]
            )

        return ControlAffineSystem(
            name="unicycle_linearized",
            state_dim=3,
            control_dim=2,
            drift=lambda x: np.zeros(3),
            input_matrix=input_matrix,
        )

    @staticmethod
    def get_system(name: str, params: Mapping[str, ParamValue]) -> ControlAffineSystem:
        defaults = {
            "single_integrator_1d": {"decay": 0.0, "gain": 1.0},
            "double_integrator_drift": {"damping": 0.0},
            "unicycle_linearized": {"lookahead": 0.1},
        }
        if name not in defaults:
            raise ConfigurationError(f"unknown system {name!r}; builtin systems: {BuiltinCatalog.system_names()}")
        merged = _params(name, params, defaults[name])
        kwargs = {key: _scalar(name, key, value) for key, value in merged.items()}
        return getattr(BuiltinCatalog, name)(**kwargs)

    @staticmethod
    def policy_names() -> List[str]:
        return ["zero", "constant", "go_to_target"]

    @staticmethod
    def get_policy(nominal: Union[List[float], PolicySection], control_dim: int) -> Policy:
        """A bare list is a constant control; otherwise a named policy with parameters"""
        if isinstance(nominal, list):
            nominal = PolicySection(policy="constant", params={"value": nominal})

        name = nominal.policy
        if name == "zero":
            _params(name, nominal.params, {})
            return lambda x: np.zeros(control_dim)

        if name == "constant":
            merged = _params(name, nominal.params, {"value": [0.0] * control_dim})
            value = np.atleast_1d(np.asarray(merged["value"], dtype=float))
            if value.size != control_dim:
                raise ConfigurationError(f"constant policy has {value.size} components, controls have {control_dim}")
            return lambda x: value.copy()

        if name == "go_to_target":
            merged = _params(name, nominal.params, {"target": [0.0] * control_dim, "gain": 1.0})
            target = np.atleast_1d(np.asarray(merged["target"], dtype=float))
            gain = _scalar(name, "gain", merged["gain"])
            if target.size != control_dim:
                raise ConfigurationError(f"go_to_target target has {target.size} components, controls have {control_dim}")
            # steers the first control_dim state coordinates
            return lambda x: gain * (target - np.asarray(x, dtype=float)[:control_dim])

        raise ConfigurationError(f"unknown nominal policy {name!r}; builtin policies: {BuiltinCatalog.policy_names()}")
