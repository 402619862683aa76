"""
Boosting objectives: cross-entropy and focal loss.

Each objective gives per-sample loss, and the first and second derivatives of the loss
with respect to the raw score (logit) z, with p = sigmoid(z). Natural logarithms
throughout.

Focal loss, with u = 1 − p:
    y = 1:  L = −α u^γ ln p
    y = 0:  L = −(1 − α) p^γ ln u      (standard form)
            L = −(1 − α) p ln u        (printed form, the γ = 1 case of the above)
"""

from typing import Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special

from src.utils import ConfigurationError, NumericError

ArrayLike = Union[float, np.ndarray]

PROB_CLIP = 1e-7
HESS_FLOOR = 1e-16


def sigmoid(z: ArrayLike, clip: float = PROB_CLIP) -> ArrayLike:
    """Logistic function clamped to [clip, 1 − clip]."""
    return np.clip(special.expit(z), clip, 1.0 - clip)


def _checked(p: ArrayLike, clip: float) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise NumericError("Probabilities must lie in [0, 1]")
    return np.clip(p, clip, 1.0 - clip)


def _shaped(value: np.ndarray, like) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def cross_entropy(y: ArrayLike, p: ArrayLike, clip: float = PROB_CLIP) -> ArrayLike:
    """−[y ln p + (1 − y) ln(1 − p)]."""
    q = _checked(p, clip)
    y = np.asarray(y, dtype=np.float64)
    loss = np.where(y == 1, -np.log(q), -np.log1p(-q))
    return _shaped(loss, p)


class FocalParams(BaseModel):
    """Focal loss weighting α, focusing γ and y = 0 branch form."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0, lt=1)
    gamma: float = Field(..., ge=0)
    form: Literal["standard", "printed"] = "standard"


def focal_loss(y: ArrayLike, p: ArrayLike, params: FocalParams, clip: float = PROB_CLIP) -> ArrayLike:
    q = _checked(p, clip)
    y = np.asarray(y, dtype=np.float64)
    u = 1.0 - q
    negative_power = params.gamma if params.form == "standard" else 1.0
    positive = -params.alpha * u ** params.gamma * np.log(q)
    negative = -(1.0 - params.alpha) * q ** negative_power * np.log1p(-q)
    return _shaped(np.where(y == 1, positive, negative), p)


class Objective:
    """Loss contract used by the boosting engine."""

    name: str = "objective"

    def __init__(self, clip: float = PROB_CLIP, hess_floor: float = HESS_FLOOR):
        self.clip = clip
        self.hess_floor = hess_floor

    @property
    def descriptor(self) -> str:
        raise NotImplementedError

    def loss(self, y: ArrayLike, p: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def _derivatives(self, y: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def grad_hess(self, y: ArrayLike, z: ArrayLike, floor_hessian: bool = True) -> Tuple[ArrayLike, ArrayLike]:
        """
        First and second derivative of the loss with respect to z.

        Args:
            y: Labels in {0, 1}
            z: Raw scores
            floor_hessian: Clamp h to at least the Hessian floor

        Returns:
            (g, h), scalars or arrays matching z
        """
        p = sigmoid(np.asarray(z, dtype=np.float64), self.clip)
        g, h = self._derivatives(np.asarray(y, dtype=np.float64), p)
        if floor_hessian:
            h = np.maximum(h, self.hess_floor)
        return _shaped(g, z), _shaped(h, z)

    def mean_loss(self, y: np.ndarray, z: np.ndarray, weights: np.ndarray = None) -> float:
        losses = self.loss(y, sigmoid(z, self.clip))
        return float(np.average(losses, weights=weights))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.descriptor})"


class CrossEntropyObjective(Objective):
    name = "ce"

    @property
    def descriptor(self) -> str:
        return "ce"

    def loss(self, y, p):
        return cross_entropy(y, p, self.clip)

    def _derivatives(self, y, p):
        return p - y, p * (1.0 - p)


class FocalObjective(Objective):
    name = "focal"

    def __init__(self, params: FocalParams, clip: float = PROB_CLIP, hess_floor: float = HESS_FLOOR):
        super().__init__(clip, hess_floor)
        self.params = params

    @property
    def descriptor(self) -> str:
        text = f"focal:{_number(self.params.alpha)}:{_number(self.params.gamma)}"
        return text + ":printed" if self.params.form == "printed" else text

    def loss(self, y, p):
        return focal_loss(y, p, self.params, self.clip)

    def _derivatives(self, y, p):
        alpha, gamma = self.params.alpha, self.params.gamma
        gamma_negative = gamma if self.params.form == "standard" else 1.0
        u = 1.0 - p
        log_p, log_u = np.log(p), np.log(u)

        # y = 1
        a = gamma * p * log_p - u
        g_pos = alpha * u ** gamma * a
        h_pos = alpha * p * u ** gamma * (-gamma * a + u * (gamma * log_p + gamma + 1.0))

        # y = 0, mirror image of the positive branch under p <-> u
        b = p - gamma_negative * u * log_u
        g_neg = (1.0 - alpha) * p ** gamma_negative * b
        h_neg = (1.0 - alpha) * u * p ** gamma_negative * (
            gamma_negative * b + p * (gamma_negative * log_u + gamma_negative + 1.0)
        )
        positive = y == 1
        return np.where(positive, g_pos, g_neg), np.where(positive, h_pos, h_neg)


def _number(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def parse_objective(text: str, clip: float = PROB_CLIP, hess_floor: float = HESS_FLOOR) -> Objective:
    """
    Build an objective from ``ce`` or ``focal:<alpha>:<gamma>[:printed]``.

    Raises:
        ConfigurationError: Unrecognized descriptor or out-of-range parameters
    """
    parts = text.strip().split(":")
    if parts == ["ce"]:
        return CrossEntropyObjective(clip, hess_floor)
    if parts[0] == "focal" and len(parts) in (3, 4):
        if len(parts) == 4 and parts[3] not in ("printed", "standard"):
            raise ConfigurationError(f"Unknown focal form {parts[3]!r} in {text!r}")
        try:
            params = FocalParams(alpha=float(parts[1]), gamma=float(parts[2]),
                                 form=parts[3] if len(parts) == 4 else "standard")
        except ValueError as e:
            raise ConfigurationError(f"Invalid focal parameters in {text!r}: {e}") from e
        return FocalObjective(params, clip, hess_floor)
    raise ConfigurationError(f"Unknown objective {text!r}; expected 'ce' or 'focal:<alpha>:<gamma>[:printed]'")


def grad_hess(y: ArrayLike, z: ArrayLike, objective: Objective) -> Tuple[ArrayLike, ArrayLike]:
    """Derivatives of ``objective`` at raw score z, Hessian floored."""
    return objective.grad_hess(y, z)
