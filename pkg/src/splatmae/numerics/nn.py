"""Neural-network building blocks on top of the autodiff tensor."""

from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.exceptions import ConfigurationError, ShapeError
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Base class for layers.

    Assigning a ``Parameter`` or ``Module`` attribute registers it, so
    ``named_parameters`` can walk the tree with dotted names.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for module in self._modules.values():
            yield from module.modules()

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def reseed(self, seed: Sequence[int]) -> None:
        """Give every stochastic submodule a generator derived from ``seed``."""
        for index, module in enumerate(self.modules()):
            if isinstance(module, (DropPath, Dropout)):
                module.rng = np.random.default_rng(list(seed) + [index])

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(
        self, state: Dict[str, np.ndarray], strict: bool = True
    ) -> None:
        params = dict(self.named_parameters())
        if strict:
            missing = sorted(set(params) - set(state))
            unexpected = sorted(set(state) - set(params))
            if missing or unexpected:
                raise ConfigurationError(
                    "State does not match model parameters",
                    {"missing": missing, "unexpected": unexpected},
                )
        for name, param in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ConfigurationError(
                    f"Parameter {name} has shape {param.shape}, "
                    f"state has {value.shape}",
                    {"name": name},
                )
            param.data = value.copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class ModuleList(Module):
    """Ordered container registering each child under its index."""

    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


class Linear(Module):
    """Affine map over the last axis, uniform init in ±1/sqrt(in_features)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
    ):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        bound = 1.0 / np.sqrt(in_features)
        shape = (in_features, out_features)
        self.weight = Parameter(rng.uniform(-bound, bound, size=shape))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"Linear expects last dim {self.in_features}, got shape {x.shape}",
                {"expected": self.in_features, "shape": list(x.shape)},
            )
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class PointwiseMLP(Module):
    """Shared per-item MLP over the last axis with GELU between layers."""

    def __init__(
        self,
        dims: Sequence[int],
        rng: np.random.Generator,
        final_activation: bool = False,
    ):
        super().__init__()
        if len(dims) < 2:
            raise ConfigurationError(
                "PointwiseMLP needs at least input and output dims"
            )
        self.layers = ModuleList(
            [Linear(d_in, d_out, rng) for d_in, d_out in zip(dims[:-1], dims[1:])]
        )
        self.final_activation = final_activation

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_activation:
                x = x.gelu()
        return x


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def normalize(self, x: Tensor) -> Tensor:
        """Zero-mean, unit-variance rows before the affine part."""
        centered = x - x.mean(axis=-1, keepdims=True)
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt()

    def forward(self, x: Tensor) -> Tensor:
        return self.normalize(x) * self.weight + self.bias


class Dropout(Module):
    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate <= 0.0:
            return x
        return x.dropout(self.rate, self.rng)


class DropPath(Module):
    """Stochastic depth: drops whole residual branches per sample."""

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate <= 0.0:
            return x
        keep_prob = 1.0 - self.rate
        mask_shape = (x.shape[0],) + (1,) * (x.ndim - 1)
        mask = (self.rng.random(mask_shape) < keep_prob) / keep_prob
        return x * mask


class MultiHeadAttention(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        if num_heads < 1 or dim % num_heads != 0:
            raise ConfigurationError(
                f"Model dim {dim} is not divisible by {num_heads} heads",
                {"dim": dim, "num_heads": num_heads},
            )
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        batch, tokens, dim = x.shape
        qkv = self.qkv(x).reshape(batch, tokens, 3, self.num_heads, self.head_dim)
        qkv = qkv.transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]

        attn = ((q @ k.swapaxes(-1, -2)) * self.scale).softmax(axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(batch, tokens, dim)
        return self.proj(out)


class TransformerBlock(Module):
    """Pre-norm residual block: attention then MLP, each behind drop path."""

    def __init__(
        self,
        dim: int,
        num_heads: int,
        rng: np.random.Generator,
        mlp_ratio: float = 4.0,
        drop_path: float = 0.0,
    ):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads, rng)
        self.drop_path = DropPath(drop_path)
        self.norm2 = LayerNorm(dim)
        self.mlp = PointwiseMLP([dim, int(dim * mlp_ratio), dim], rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.drop_path(self.attn(self.norm1(x)))
        x = x + self.drop_path(self.mlp(self.norm2(x)))
        return x


class TransformerStack(Module):
    """Sequence of blocks with linearly increasing drop-path rates."""

    def __init__(
        self,
        dim: int,
        depth: int,
        num_heads: int,
        rng: np.random.Generator,
        mlp_ratio: float = 4.0,
        drop_path: float = 0.0,
    ):
        super().__init__()
        rates = np.linspace(0.0, drop_path, depth) if depth > 1 else [drop_path] * depth
        self.blocks = ModuleList(
            [
                TransformerBlock(dim, num_heads, rng, mlp_ratio, float(rate))
                for rate in rates
            ]
        )
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor, pos: Optional[Tensor] = None) -> Tensor:
        return self.forward_with_taps(x, pos)[0]

    def forward_with_taps(
        self, x: Tensor, pos: Optional[Tensor] = None, taps: Sequence[int] = ()
    ) -> Tuple[Tensor, List[Tensor]]:
        """Run the stack; also return the outputs of the 1-based blocks in ``taps``."""
        tapped = []
        for i, block in enumerate(self.blocks, start=1):
            if pos is not None:
                x = x + pos
            x = block(x)
            if i in taps:
                tapped.append(x)
        return self.norm(x), tapped


class ModuleDict(Module):
    """Named container; keys must be valid attribute names."""

    def __init__(self, modules: Optional[Dict[str, Module]] = None):
        super().__init__()
        self._keys: List[str] = []
        for key, module in (modules or {}).items():
            self[key] = module

    def __setitem__(self, key: str, module: Module) -> None:
        setattr(self, key, module)
        if key not in self._keys:
            self._keys.append(key)

    def __getitem__(self, key: str) -> Module:
        return self._modules[key]

    def __contains__(self, key: str) -> bool:
        return key in self._modules

    def keys(self) -> List[str]:
        return list(self._keys)

    def items(self) -> List[Tuple[str, Module]]:
        return [(key, self._modules[key]) for key in self._keys]
