"""Residual bilinear attention super-resolution network.

Layout of the network, for one LR image ``x`` of shape ``(1, H, W)``::

    h0 = head(x)                               3x3 conv, 1 -> C
    h  = block_{B-1}( ... block_0(h0)) + h0    residual attention blocks
    y  = reconstruct(upsample(h))              log2(r) x [3x3 conv C -> 4C, shuffle 2], 1x1 conv C -> 1

Each block computes ``h_conv = conv2(relu(conv1(x)))`` and reweights it with a
channel gate (mean + covariance statistics over space) and/or a spatial gate
(mean + pooled covariance statistics over channels).  The gated maps are
concatenated, fused by a 1x1 conv and added back to the block input.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import nn
from .autodiff import Tensor, as_tensor, concat, mul, no_grad, relu, reshape, sigmoid
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    B: int = 5
    C: int = 64
    r: int = 2
    sa_pool: int = 8
    ca_reduction: int = 4
    use_ca: bool = True
    use_sa: bool = True
    use_first_order: bool = True
    use_second_order: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.B < 1:
            raise ConfigError(f"B must be >= 1, got {self.B}")
        if self.r not in (2, 4):
            raise ConfigError(f"scale r must be 2 or 4, got {self.r}")
        if self.ca_reduction < 1 or self.C < self.ca_reduction:
            raise ConfigError(f"C={self.C} must be >= ca_reduction={self.ca_reduction}")
        if self.use_ca and self.C % self.ca_reduction:
            raise ConfigError(f"C={self.C} is not divisible by ca_reduction={self.ca_reduction}")
        if self.sa_pool < 1:
            raise ConfigError(f"sa_pool must be >= 1, got {self.sa_pool}")
        if (self.use_ca or self.use_sa) and not (self.use_first_order or self.use_second_order):
            raise ConfigError("an enabled attention branch needs first- or second-order pooling")
        if self.use_sa and self.use_second_order and self.C < 2:
            raise ConfigError("second-order spatial attention needs C >= 2")

    @property
    def needs_sa_pool(self) -> bool:
        return self.use_sa and self.use_second_order

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# ablation grid: name -> switches
VARIANTS = OrderedDict([
    ("baseline", dict(use_ca=False, use_sa=False)),
    ("CA-1st", dict(use_ca=True, use_sa=False, use_first_order=True, use_second_order=False)),
    ("CA-2nd", dict(use_ca=True, use_sa=False, use_first_order=False, use_second_order=True)),
    ("CA-both", dict(use_ca=True, use_sa=False, use_first_order=True, use_second_order=True)),
    ("SA-both", dict(use_ca=False, use_sa=True, use_first_order=True, use_second_order=True)),
    ("CA+SA-both", dict(use_ca=True, use_sa=True, use_first_order=True, use_second_order=True)),
])


def variant(config: ModelConfig, name: str) -> ModelConfig:
    switches = dict(use_first_order=True, use_second_order=True)
    switches.update(VARIANTS[name])
    d = config.to_dict()
    d.update(switches)
    return ModelConfig(**d)


class ParamStore:
    """Ordered name -> Tensor map of learnable parameters."""

    def __init__(self, items=()):
        self._params: OrderedDict[str, Tensor] = OrderedDict(items)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list:
        return list(self._params)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        self._params[name] = Tensor(value, requires_grad=True)

    def num_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def astype(self, dtype) -> "ParamStore":
        return ParamStore((k, Tensor(v.data.astype(dtype), requires_grad=True)) for k, v in self.items())

    def copy(self) -> "ParamStore":
        return ParamStore((k, Tensor(v.data.copy(), requires_grad=True)) for k, v in self.items())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def scope(self, prefix: str) -> dict:
        """Parameters under ``prefix.``, keyed by the remaining name."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._params.items() if k.startswith(p)}


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, tuple]":
    """Deterministic parameter layout for ``config``."""
    c = config.C
    shapes = OrderedDict()

    def conv(name, cout, cin, k):
        shapes[f"{name}.weight"] = (cout, cin, k, k)
        shapes[f"{name}.bias"] = (cout,)

    conv("head", c, 1, 3)
    for b in range(config.B):
        blk = f"block{b}"
        conv(f"{blk}.conv1", c, c, 3)
        conv(f"{blk}.conv2", c, c, 3)
        if config.use_ca:
            if config.use_second_order:
                shapes[f"{blk}.ca.rowwise.weight"] = (1, c)
                shapes[f"{blk}.ca.rowwise.bias"] = (1,)
            cr = c // config.ca_reduction
            shapes[f"{blk}.ca.down.weight"] = (cr, c)
            shapes[f"{blk}.ca.down.bias"] = (cr,)
            shapes[f"{blk}.ca.up.weight"] = (c, cr)
            shapes[f"{blk}.ca.up.bias"] = (c,)
        if config.use_sa:
            if config.use_second_order:
                k = config.sa_pool * config.sa_pool
                shapes[f"{blk}.sa.rowwise.weight"] = (1, k)
                shapes[f"{blk}.sa.rowwise.bias"] = (1,)
            conv(f"{blk}.sa.conv", 1, 1, 1)
        n_branches = int(config.use_ca) + int(config.use_sa)
        conv(f"{blk}.fuse", c, c * max(n_branches, 1), 1)
    for s in range(int(math.log2(config.r))):
        conv(f"upsample{s}", 4 * c, c, 3)
    conv("reconstruct", 1, c, 1)
    return shapes


def build(config: ModelConfig, seed: int = 0, dtype=np.float64) -> ParamStore:
    """Initialise parameters: weights ~ U(+-sqrt(6 / fan_in)), biases zero."""
    config.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias"):
            value = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = math.sqrt(6.0 / fan_in)
            value = rng.uniform(-limit, limit, size=shape)
        store.add(name, value.astype(dtype))
    return store


def zeros_like_store(config: ModelConfig, dtype=np.float64) -> ParamStore:
    store = ParamStore()
    for name, shape in parameter_shapes(config).items():
        store.add(name, np.zeros(shape, dtype=dtype))
    return store


# -- forward pieces ------------------------------------------------------

def _conv(p: dict, name: str, x: Tensor, padding: int) -> Tensor:
    return nn.conv2d(x, p[f"{name}.weight"], p[f"{name}.bias"], padding=padding)


def ca_branch(p: dict, h_conv: Tensor, config: ModelConfig) -> Tensor:
    """Channel gate from spatial mean and channel covariance statistics."""
    n, c = h_conv.shape[0], h_conv.shape[1]
    if c % config.ca_reduction:
        raise ConfigError(f"C={c} is not divisible by ca_reduction={config.ca_reduction}")
    desc = None
    if config.use_first_order:
        desc = reshape(nn.channel_avg_pool_spatial(h_conv), (n, c))
    if config.use_second_order:
        second = nn.rowwise_conv(nn.channel_covariance(h_conv),
                                 p["rowwise.weight"], p["rowwise.bias"])
        desc = second if desc is None else desc + second
    z = relu(nn.dense(desc, p["down.weight"], p["down.bias"]))
    z = nn.dense(z, p["up.weight"], p["up.bias"])
    gate = reshape(sigmoid(z), (n, c, 1, 1))
    return mul(h_conv, gate)


def sa_branch(p: dict, h_conv: Tensor, config: ModelConfig) -> Tensor:
    """Spatial gate, shared by all channels, from channel mean and pooled position covariance."""
    n, c, h, w = h_conv.shape
    k = config.sa_pool
    stat = None
    if config.use_first_order:
        stat = nn.spatial_avg_pool_channel(h_conv)
    if config.use_second_order:
        if h < k or w < k:
            raise ShapeError(f"spatial attention needs H, W >= sa_pool={k}, got {h}x{w}")
        pooled = nn.adaptive_avg_pool(h_conv, k, k)
        rows = nn.rowwise_conv(nn.spatial_covariance(pooled),
                               p["rowwise.weight"], p["rowwise.bias"])
        second = nn.nearest_upsample(reshape(rows, (n, 1, k, k)), h, w)
        stat = second if stat is None else stat + second
    gate = sigmoid(_conv(p, "conv", stat, padding=0))
    return mul(h_conv, gate)


def fuse(p: dict, features, skip_in: Tensor) -> Tensor:
    """Concatenate branch outputs (CA first, SA second), 1x1 conv, add skip."""
    features = list(features)
    shapes = {f.shape for f in features}
    if len(shapes) != 1:
        raise ShapeError(f"fuse: branch outputs differ in shape: {sorted(shapes)}")
    x = features[0] if len(features) == 1 else concat(features, axis=1)
    out = _conv(p, "fuse", x, padding=0)
    if out.shape != skip_in.shape:
        raise ShapeError(f"fuse: output {out.shape} vs skip {skip_in.shape}")
    return out + skip_in


def rbam_block(p: dict, x: Tensor, config: ModelConfig) -> Tensor:
    if x.shape[1] != config.C:
        raise ShapeError(f"block expects {config.C} channels, got {x.shape[1]}")
    h_conv = _conv(p, "conv2", relu(_conv(p, "conv1", x, 1)), 1)
    features = []
    if config.use_ca:
        features.append(ca_branch(_sub(p, "ca"), h_conv, config))
    if config.use_sa:
        features.append(sa_branch(_sub(p, "sa"), h_conv, config))
    if not features:
        features = [h_conv]
    return fuse(p, features, x)


def upsample_head(params: ParamStore, h: Tensor, r: int) -> Tensor:
    if r not in (2, 4):
        raise ConfigError(f"unsupported scale {r}; expected 2 or 4")
    for s in range(int(math.log2(r))):
        h = nn.conv2d(h, params[f"upsample{s}.weight"], params[f"upsample{s}.bias"], padding=1)
        h = nn.pixel_shuffle(h, 2)
    return nn.conv2d(h, params["reconstruct.weight"], params["reconstruct.bias"], padding=0)


def _sub(p: dict, prefix: str) -> dict:
    pre = prefix + "."
    return {k[len(pre):]: v for k, v in p.items() if k.startswith(pre)}


def forward(params: ParamStore, config: ModelConfig, lr_image) -> Tensor:
    """Map ``(1, H, W)`` (or a batch ``(N, 1, H, W)``) to ``r``-times larger output."""
    x = as_tensor(lr_image)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected a (1, H, W) image or (N, 1, H, W) batch, got {x.shape}")
    h, w = x.shape[-2:]
    if config.needs_sa_pool and (h < config.sa_pool or w < config.sa_pool):
        raise ShapeError(
            f"input {h}x{w} is smaller than sa_pool={config.sa_pool}; second-order spatial "
            f"attention needs H, W >= sa_pool"
        )
    h0 = nn.conv2d(x, params["head.weight"], params["head.bias"], padding=1)
    feat = h0
    for b in range(config.B):
        feat = rbam_block(params.scope(f"block{b}"), feat, config)
    feat = feat + h0
    out = upsample_head(params, feat, config.r)
    return reshape(out, out.shape[1:]) if squeeze else out


def predictor(params: ParamStore, config: ModelConfig):
    """Return ``f(lr_array) -> sr_array`` running the network without a tape."""
    dtype = next(iter(params.items()))[1].dtype

    def run(lr: np.ndarray) -> np.ndarray:
        with no_grad():
            out = forward(params, config, Tensor(lr[None].astype(dtype)))
        return out.data[0].astype(np.float64)

    return run
