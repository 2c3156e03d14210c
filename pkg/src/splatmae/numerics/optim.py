"""AdamW optimizer and learning-rate schedule."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from ..utils.exceptions import ConfigurationError, TrainingError
from .nn import Parameter


@dataclass
class OptimizerState:
    """Per-parameter moments plus the shared step count."""

    lr: float
    weight_decay: float
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    """Adam with decoupled weight decay.

    Attributes:
        params: Named trainable parameters
        state: Moments and step count
    """

    def __init__(
        self,
        named_params: Iterable[Tuple[str, Parameter]],
        lr: float = 1e-3,
        weight_decay: float = 0.05,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params: Dict[str, Parameter] = dict(named_params)
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState(lr=lr, weight_decay=weight_decay)
        for name, param in self.params.items():
            self.state.first_moment[name] = np.zeros_like(param.data)
            self.state.second_moment[name] = np.zeros_like(param.data)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self, lr: float = None) -> None:
        """Apply one update using the gradients currently on the parameters.

        Parameters without a gradient are skipped entirely: no decay and no
        moment update.
        """
        lr = self.state.lr if lr is None else lr
        beta1, beta2 = self.betas

        active = {
            name: param for name, param in self.params.items() if param.grad is not None
        }
        for name, param in active.items():
            if not np.all(np.isfinite(param.grad)):
                raise TrainingError(
                    f"Non-finite gradient in parameter {name}",
                    {"parameter": name, "step": self.state.step},
                )

        self.state.step += 1
        t = self.state.step
        correction1 = 1.0 - beta1**t
        correction2 = 1.0 - beta2**t

        for name, param in active.items():
            grad = param.grad
            m = self.state.first_moment[name]
            v = self.state.second_moment[name]
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad

            param.data = param.data * (1.0 - lr * self.state.weight_decay)
            m_hat = m / correction1
            v_hat = v / correction2
            param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Flatten the state into named arrays for checkpointing."""
        state = {"optim.step": np.asarray(float(self.state.step))}
        for name in self.params:
            state[f"optim.m.{name}"] = self.state.first_moment[name].copy()
            state[f"optim.v.{name}"] = self.state.second_moment[name].copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, param in self.params.items():
            for prefix, target in (
                ("optim.m.", self.state.first_moment),
                ("optim.v.", self.state.second_moment),
            ):
                key = prefix + name
                if key not in state:
                    raise ConfigurationError(
                        f"Optimizer state is missing {key}", {"key": key}
                    )
                value = np.asarray(state[key], dtype=np.float64)
                if value.shape != param.shape:
                    raise ConfigurationError(
                        f"Optimizer moment {key} has shape {value.shape}, "
                        f"expected {param.shape}"
                    )
                target[name] = value.copy()
        self.state.step = int(round(float(np.asarray(state["optim.step"]))))


def cosine_schedule(
    step: int, total_steps: int, warmup_steps: int, base_lr: float
) -> float:
    """Linear warmup from 0 to ``base_lr``, then cosine decay to 0 at the end."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    decay_steps = max(total_steps - warmup_steps, 1)
    progress = min(max((step - warmup_steps) / decay_steps, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
