"""MLP generators and spectrally normalized critics.

Dense stand-ins for a DCGAN pair: the generator stacks
dense -> batchnorm -> leaky_relu and ends in tanh, the critic stacks
spectrally normalized dense -> leaky_relu and ends in a spectrally normalized
linear scalar. ``width_multiplier`` is the capacity knob.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor

SN_EPS = 1e-12
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LEAKY_SLOPE = 0.2


class SpecError(ValueError):
    """Invalid network specification."""


@dataclass(frozen=True)
class NetworkSpec:
    role: str  # "generator" | "discriminator"
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: str = "leaky_relu"
    batchnorm_enabled: bool = False
    spectral_norm_enabled: bool = False
    width_multiplier: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))

    def validate(self) -> None:
        if self.role not in ("generator", "discriminator"):
            raise SpecError(f"role must be generator|discriminator, got {self.role!r}")
        if self.activation not in ("leaky_relu", "tanh"):
            raise SpecError(f"activation must be leaky_relu|tanh, got {self.activation!r}")
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        if any(d <= 0 for d in dims):
            raise SpecError(f"all layer widths must be positive, got {dims}")
        if self.role == "discriminator":
            if self.output_dim != 1:
                raise SpecError("discriminator output_dim must be 1")
            if self.batchnorm_enabled:
                raise SpecError("discriminator has no batch normalization")
        elif self.spectral_norm_enabled:
            raise SpecError("generator has no spectral normalization")
        if self.width_multiplier < 1:
            raise SpecError("width_multiplier must be a positive integer")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        """Trainable scalars: weights and biases, plus BN scale/shift per hidden unit."""
        n = sum(i * o + o for i, o in self.layer_dims)
        if self.batchnorm_enabled:
            n += 2 * sum(self.hidden_widths)
        return n


def generator_spec(latent_dim: int, data_dim: int, hidden_widths=(64, 64)) -> NetworkSpec:
    return NetworkSpec(
        role="generator",
        input_dim=latent_dim,
        hidden_widths=tuple(hidden_widths),
        output_dim=data_dim,
        batchnorm_enabled=True,
    )


def discriminator_spec(data_dim: int, width_multiplier: int, depth: int = 2) -> NetworkSpec:
    """Critic with ``depth`` hidden layers of ``width_multiplier`` units each."""
    return NetworkSpec(
        role="discriminator",
        input_dim=data_dim,
        hidden_widths=(width_multiplier,) * depth,
        output_dim=1,
        spectral_norm_enabled=True,
        width_multiplier=width_multiplier,
    )


@dataclass
class DenseLayer:
    W: Tensor  # (out, in)
    b: Tensor  # (out,)
    spectral_norm_enabled: bool = False
    u: np.ndarray | None = None  # (out,), unit norm
    sigma: float = 1.0  # last spectral estimate, for inspection


@dataclass
class BatchNorm:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class Network:
    """Parameter store plus forward pass (houses generator or critic weights)."""

    spec: NetworkSpec
    layers: list[DenseLayer]
    norms: list[BatchNorm] = field(default_factory=list)
    seed: int = 0
    step: int = 0

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        for bn in self.norms:
            out += [bn.gamma, bn.beta]
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def forward(self, x, train: bool = True, update_sn: bool = True, update_stats: bool = True) -> Tensor:
        return forward(self, x, train=train, update_sn=update_sn, update_stats=update_stats)

    __call__ = forward

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every array that defines the network's behaviour, in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"layer{i}.W", layer.W.data))
            out.append((f"layer{i}.b", layer.b.data))
            if layer.u is not None:
                out.append((f"layer{i}.u", layer.u))
        for i, bn in enumerate(self.norms):
            out.append((f"bn{i}.gamma", bn.gamma.data))
            out.append((f"bn{i}.beta", bn.beta.data))
            out.append((f"bn{i}.running_mean", bn.running_mean))
            out.append((f"bn{i}.running_var", bn.running_var))
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.state_arrays():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / max(n, SN_EPS)


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """He-normal weights, zero biases, random unit power-iteration vectors."""
    spec.validate()
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(spec.layer_dims):
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        u = _unit(rng.normal(size=fan_out)) if spec.spectral_norm_enabled else None
        layers.append(
            DenseLayer(
                W=Tensor(W, requires_grad=True, name=f"layer{k}.W"),
                b=Tensor(np.zeros(fan_out), requires_grad=True, name=f"layer{k}.b"),
                spectral_norm_enabled=spec.spectral_norm_enabled,
                u=u,
            )
        )
    norms = []
    if spec.batchnorm_enabled:
        for k, width in enumerate(spec.hidden_widths):
            norms.append(
                BatchNorm(
                    gamma=Tensor(np.ones(width), requires_grad=True, name=f"bn{k}.gamma"),
                    beta=Tensor(np.zeros(width), requires_grad=True, name=f"bn{k}.beta"),
                    running_mean=np.zeros(width),
                    running_var=np.ones(width),
                )
            )
    return Network(spec=spec, layers=layers, norms=norms, seed=int(seed))


def spectral_norm_apply(layer: DenseLayer, power_iters: int = 1, update: bool = True) -> Tensor:
    """Return ``W / sigma`` with sigma estimated by persistent power iteration.

    Each round does v <- W^T u / |W^T u|, u <- W v / |W v|; sigma = u^T W v.
    With ``update=False`` only v is recomputed from the stored u, which stays
    untouched (used when the critic is merely being read, e.g. in the
    generator step). Gradients flow through W / sigma(W) with u, v constant.
    """
    if power_iters < 1:
        raise ContractError("power_iters must be >= 1")
    W = layer.W.data
    u = layer.u
    if update:
        for _ in range(power_iters):
            v = _unit(W.T @ u)
            u = _unit(W @ v)
        layer.u = u
    else:
        v = _unit(W.T @ u)
    sigma = max(float(u @ W @ v), SN_EPS)
    layer.sigma = sigma
    outer = np.outer(u, v)

    def backward(g):
        return (g / sigma - (np.sum(g * W) / sigma**2) * outer,)

    return Tensor._from_op(W / sigma, (layer.W,), backward, "spectral_norm")


def batchnorm_forward(
    x: Tensor, bn: BatchNorm, train: bool = True, update_stats: bool = True
) -> Tensor:
    """Per-feature batch normalization followed by scale and shift.

    Train mode uses biased batch statistics and (unless ``update_stats`` is
    off) updates the running estimates with momentum 0.9; eval mode uses the
    running estimates.
    """
    if x.data.ndim != 2 or x.shape[1] != bn.gamma.shape[0]:
        raise DimensionError(f"batchnorm: input {x.shape} vs {bn.gamma.shape[0]} features")
    xd, gamma, beta = x.data, bn.gamma.data, bn.beta.data
    if not train:
        inv = 1.0 / np.sqrt(bn.running_var + BN_EPS)
        xhat = (xd - bn.running_mean) * inv

        def backward_eval(g):
            return (g * gamma * inv, (g * xhat).sum(axis=0), g.sum(axis=0))

        return Tensor._from_op(xhat * gamma + beta, (x, bn.gamma, bn.beta), backward_eval, "batchnorm")

    n = xd.shape[0]
    if n < 2:
        raise ContractError("batchnorm in train mode needs a batch of at least 2 rows")
    mean = xd.mean(axis=0)
    var = xd.var(axis=0)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (xd - mean) * inv
    if update_stats:
        bn.running_mean = BN_MOMENTUM * bn.running_mean + (1 - BN_MOMENTUM) * mean
        bn.running_var = BN_MOMENTUM * bn.running_var + (1 - BN_MOMENTUM) * var

    def backward(g):
        gx = g * gamma
        dx = inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
        return (dx, (g * xhat).sum(axis=0), g.sum(axis=0))

    return Tensor._from_op(xhat * gamma + beta, (x, bn.gamma, bn.beta), backward, "batchnorm")


def _activate(x: Tensor, kind: str) -> Tensor:
    return T.leaky_relu(x, LEAKY_SLOPE) if kind == "leaky_relu" else T.tanh(x)


def forward(
    net: Network, x, train: bool = True, update_sn: bool = True, update_stats: bool = True
) -> Tensor:
    """Run ``x`` (batch x input_dim) through the network.

    ``train`` selects batch statistics for batchnorm and ``update_stats``
    whether the running statistics move; ``update_sn`` advances the critic's
    power iteration by one round.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    spec = net.spec
    if x.data.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(f"{spec.role}: expected input (batch, {spec.input_dim}), got {x.shape}")
    h = x
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        W = spectral_norm_apply(layer, 1, update=update_sn) if layer.spectral_norm_enabled else layer.W
        h = T.linear(h, W, layer.b)
        if k < last:
            if spec.batchnorm_enabled:
                h = batchnorm_forward(h, net.norms[k], train=train, update_stats=update_stats)
            h = _activate(h, spec.activation)
    if spec.role == "generator":
        h = T.tanh(h)
    return h


def effective_weights(net: Network) -> list[np.ndarray]:
    """The weights the critic actually applies (W / sigma), without advancing u."""
    out = []
    for layer in net.layers:
        if layer.spectral_norm_enabled:
            with T.no_grad():
                out.append(spectral_norm_apply(layer, 1, update=False).data)
        else:
            out.append(layer.W.data)
    return out


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"GNLB"


def save_checkpoint(net: Network, path, extra: dict | None = None) -> None:
    """Write ``GNLB`` + u32 header length + JSON header + little-endian float64 payload."""
    arrays = net.state_arrays()
    header = {
        "spec": asdict(net.spec),
        "seed": net.seed,
        "step": net.step,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def load_checkpoint(path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a genlab checkpoint")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    spec = NetworkSpec(**{**header["spec"], "hidden_widths": tuple(header["spec"]["hidden_widths"])})
    net = init_network(spec, header["seed"])
    net.step = header["step"]
    offset = 8 + hlen
    values: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        values[name] = arr.astype(np.float64)
        offset += 8 * count
    for i, layer in enumerate(net.layers):
        layer.W.data = values[f"layer{i}.W"]
        layer.b.data = values[f"layer{i}.b"]
        if layer.u is not None:
            layer.u = values[f"layer{i}.u"]
    for i, bn in enumerate(net.norms):
        bn.gamma.data = values[f"bn{i}.gamma"]
        bn.beta.data = values[f"bn{i}.beta"]
        bn.running_mean = values[f"bn{i}.running_mean"]
        bn.running_var = values[f"bn{i}.running_var"]
    return net
