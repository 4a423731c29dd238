# invfilter/utils/polynomials.py
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Term(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    coef: float
    powers: Tuple[int, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_powers(self):
        if any(p < 0 for p in self.powers):
            raise ValueError("powers must be non-negative integers")
        return self


class Polynomial(BaseModel):
    """Sum of coef * prod(x_k ** p_k) with an exact gradient"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    terms: Tuple[Term, ...]
    constant: float = 0.0

    @model_validator(mode="after")
    def _check_arity(self):
        arities = {len(t.powers) for t in self.terms}
        if len(arities) > 1:
            raise ValueError(f"polynomial terms mix state dimensions {sorted(arities)}")
        return self

    @property
    def arity(self) -> int:
        return len(self.terms[0].powers) if self.terms else 0

    def evaluator(self) -> "PolynomialEvaluator":
        return _evaluator(self)

    def __call__(self, x: np.ndarray) -> float:
        return self.evaluator()(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.evaluator().gradient(x)


class PolynomialEvaluator:
    """Array form of a Polynomial, evaluated once per simulation step"""

    __slots__ = ("constant", "arity", "_coefs", "_powers", "_grad_coefs", "_grad_powers")

    def __init__(self, poly: Polynomial):
        self.constant = float(poly.constant)
        self.arity = poly.arity
        self._coefs = np.array([t.coef for t in poly.terms], dtype=float)
        self._powers = np.array([t.powers for t in poly.terms], dtype=int).reshape(len(poly.terms), self.arity)
        # d/dx_k of a term: coef * p_k * x ** (powers - e_k); exponents clamp at 0 where p_k = 0
        eye = np.eye(self.arity, dtype=int)
        self._grad_coefs = self._coefs * self._powers.T
        self._grad_powers = np.maximum(self._powers[None, :, :] - eye[:, None, :], 0)

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if not self._coefs.size:
            return self.constant
        return float(self.constant + self._coefs @ (x ** self._powers).prod(axis=1))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self._coefs.size:
            return np.zeros(x.size)
        return (self._grad_coefs * (x ** self._grad_powers).prod(axis=2)).sum(axis=1)


@lru_cache(maxsize=256)
def _evaluator(poly: Polynomial) -> PolynomialEvaluator:
    return PolynomialEvaluator(poly)


def polynomial(terms: Sequence[Tuple[float, Sequence[int]]], constant: float = 0.0) -> Polynomial:
    """Shorthand: polynomial([(1.0, [1, 0]), (1.0, [0, 1])]) is x1 + x2"""
    return Polynomial(terms=tuple(Term(coef=c, powers=tuple(p)) for c, p in terms), constant=constant)
