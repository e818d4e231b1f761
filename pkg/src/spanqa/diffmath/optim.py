"""Parameter registry and Adadelta updates."""

import math

import numpy as np

from .tensor import Tensor


def glorot_uniform(shape, rng) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).

    Vectors are treated as fan_in = fan_out = len, which keeps their scale
    in line with the matrices they multiply.
    """
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:
        fan_in = fan_out = shape[0]
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class ParameterStore:
    """Named trainable tensors plus their per-parameter Adadelta state.

    Iteration order is lexicographic by name so that update order (and
    hence any floating-point effects) never depends on registration order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._square_avg: dict[str, np.ndarray] = {}
        self._accum_delta: dict[str, np.ndarray] = {}

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        self._square_avg[name] = np.zeros_like(tensor.data)
        self._accum_delta[name] = np.zeros_like(tensor.data)
        return tensor

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def zero_grads(self) -> None:
        for _, p in self.items():
            p.zero_grad()

    def reset_optimizer_state(self) -> None:
        for name in self._params:
            self._square_avg[name].fill(0.0)
            self._accum_delta[name].fill(0.0)

    def adadelta_step(self, lr: float = 1.0, rho: float = 0.95, eps: float = 1e-6) -> None:
        """Apply one Adadelta update from the accumulated gradients.

        square_avg <- rho * square_avg + (1 - rho) * g^2
        delta       = g * sqrt(accum_delta + eps) / sqrt(square_avg + eps)
        accum_delta <- rho * accum_delta + (1 - rho) * delta^2
        param      -= lr * delta

        Gradients are zeroed afterwards.  A parameter the loss never touched
        (grad is None) counts as zero gradient.  A non-finite gradient aborts
        the step, before any parameter moves, with the offending name.
        """
        grads = {}
        for name, p in self.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            grads[name] = g
        for name, p in self.items():
            g = grads[name]
            sq = self._square_avg[name]
            acc = self._accum_delta[name]
            sq *= rho
            sq += (1.0 - rho) * g * g
            delta = g * np.sqrt(acc + eps) / np.sqrt(sq + eps)
            acc *= rho
            acc += (1.0 - rho) * delta * delta
            p.data -= lr * delta
        self.zero_grads()


def adadelta_step(store: ParameterStore, lr: float = 1.0, rho: float = 0.95, eps: float = 1e-6) -> None:
    store.adadelta_step(lr=lr, rho=rho, eps=eps)
