"""Client and server optimizers for the generic FedOpt round.

Both optimizers act on the trainable view only; frozen coordinates are
never read into optimizer state and never written.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Optional

import numpy as np

from .core import ParamVector, check_same_layout
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class ClientOptConfig:
    name: Literal["sgd", "adamw"] = "sgd"
    lr: float = 0.1
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    proximal_mu: float = 0.0

    def __post_init__(self):
        errors = []
        if self.name not in ("sgd", "adamw"):
            errors.append(("name", f"unknown optimizer {self.name!r}"))
        if not self.lr > 0:
            errors.append(("lr", "must be > 0"))
        if not 0 <= self.momentum < 1:
            errors.append(("momentum", "must be in [0, 1)"))
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            errors.append(("beta1/beta2", "must be in [0, 1)"))
        if not self.eps > 0:
            errors.append(("eps", "must be > 0"))
        if not self.proximal_mu >= 0:
            errors.append(("proximal_mu", "must be >= 0"))
        if errors:
            raise ConfigError("invalid client optimizer config", errors)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ServerOptConfig:
    lr: float = 1.0
    momentum: float = 0.0

    def __post_init__(self):
        errors = []
        if not self.lr > 0:
            errors.append(("lr", "must be > 0"))
        if not 0 <= self.momentum < 1:
            errors.append(("momentum", "must be in [0, 1)"))
        if errors:
            raise ConfigError("invalid server optimizer config", errors)

    def to_dict(self) -> dict:
        return asdict(self)


FEDAVG_SERVER = ServerOptConfig(lr=1.0, momentum=0.0)
FEDOPT_SERVER = ServerOptConfig(lr=1.0, momentum=0.9)
DEFAULT_PROX_MU = 0.01


def fedavg_client(lr: float = 0.1) -> ClientOptConfig:
    return ClientOptConfig(name="sgd", lr=lr)


def fedprox_client(lr: float = 0.1, mu: float = DEFAULT_PROX_MU) -> ClientOptConfig:
    return ClientOptConfig(name="sgd", lr=lr, proximal_mu=mu)


def fedopt_client(lr: float = 1e-3, weight_decay: float = 0.01) -> ClientOptConfig:
    return ClientOptConfig(name="adamw", lr=lr, weight_decay=weight_decay)


@dataclass
class OptimizerState:
    step_count: int = 0
    velocity: Optional[np.ndarray] = None
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None

    @classmethod
    def for_client(cls, n_trainable: int, cfg: ClientOptConfig) -> "OptimizerState":
        if cfg.name == "adamw":
            return cls(first_moment=np.zeros(n_trainable), second_moment=np.zeros(n_trainable))
        return cls(velocity=np.zeros(n_trainable))

    @classmethod
    def for_server(cls, n_trainable: int) -> "OptimizerState":
        return cls(velocity=np.zeros(n_trainable))


def _trainable(v: ParamVector, what: str) -> np.ndarray:
    out = v.values[v.layout.trainable_mask]
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite {what}")
    return out


def client_step(
    x: ParamVector,
    g: ParamVector,
    state: OptimizerState,
    cfg: ClientOptConfig,
    x_global: ParamVector | None = None,
) -> ParamVector:
    """One local update; ``state`` advances in place."""
    layout = check_same_layout(x, g)
    mask = layout.trainable_mask
    w = x.values[mask]
    grad = _trainable(g, "gradient")
    if cfg.proximal_mu != 0.0:
        if x_global is None:
            raise ValueError("proximal term needs the round's global model")
        check_same_layout(x, x_global)
        grad = grad + cfg.proximal_mu * (w - x_global.values[mask])

    state.step_count += 1
    if cfg.name == "sgd":
        if state.velocity is None:
            state.velocity = np.zeros_like(w)
        state.velocity = cfg.momentum * state.velocity + grad
        w_new = w - cfg.lr * state.velocity
    else:
        if state.first_moment is None:
            state.first_moment = np.zeros_like(w)
            state.second_moment = np.zeros_like(w)
        t = state.step_count
        state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grad
        state.second_moment = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grad * grad
        m_hat = state.first_moment / (1.0 - cfg.beta1 ** t)
        v_hat = state.second_moment / (1.0 - cfg.beta2 ** t)
        # decoupled weight decay on the pre-step weights
        w_new = w - cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w)

    if not np.all(np.isfinite(w_new)):
        raise NumericalError("client step produced non-finite parameters")
    values = x.values.copy()
    values[mask] = w_new
    return ParamVector(layout, values)


def server_step(
    x: ParamVector, pseudo_grad: ParamVector, state: OptimizerState, cfg: ServerOptConfig
) -> ParamVector:
    """SGD with momentum on the pseudo-gradient (the negated aggregate delta)."""
    layout = check_same_layout(x, pseudo_grad)
    mask = layout.trainable_mask
    pg = _trainable(pseudo_grad, "pseudo-gradient")
    if state.velocity is None:
        state.velocity = np.zeros_like(pg)
    state.step_count += 1
    state.velocity = cfg.momentum * state.velocity + pg
    values = x.values.copy()
    values[mask] = x.values[mask] - cfg.lr * state.velocity
    if not np.all(np.isfinite(values)):
        raise NumericalError("server step produced non-finite parameters")
    return ParamVector(layout, values)
