"""Generator, PatchGAN discriminator and UNet task network built on ``autodiff``."""

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

CONDITIONING_MODES = ("paper_literal", "conditional")


class Module:
    def __init__(self):
        self._params = OrderedDict()
        self._children = OrderedDict()

    def add_param(self, name, value):
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        out = OrderedDict()
        for k, v in self._params.items():
            out[prefix + k] = v
        for k, c in self._children.items():
            out.update(c.named_parameters(prefix + k + "."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def n_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def state_dict(self):
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters().items())

    def load_state_dict(self, state):
        own = self.named_parameters()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ConfigError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            a = np.asarray(state[k], dtype=np.float64)
            if a.shape != p.shape:
                raise ShapeError(f"parameter {k}: checkpoint shape {a.shape} vs model shape {p.shape}")
            p.data = a.copy()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, x):
        return self.forward(x)


def _kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=0, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        self.weight = self.add_param("weight", _kaiming_uniform(rng, (cout, cin, k, k), cin * k * k))
        self.bias = self.add_param("bias", np.zeros(cout))

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k, stride=1, padding=0, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        fan_in = max(1.0, cin * k * k / (stride * stride))
        self.weight = self.add_param("weight", _kaiming_uniform(rng, (cin, cout, k, k), fan_in))
        self.bias = self.add_param("bias", np.zeros(cout))

    def forward(self, x):
        return ad.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


# ---------------------------------------------------------------- generator

@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 4
    base_width: int = 16
    n_resblocks: int = 2
    size: int = 32

    def __post_init__(self):
        if self.in_channels != 4:
            raise ConfigError("generator input is the stacked (buildings, tx, samples, depth) planes: in_channels must be 4")
        if self.size % 4:
            raise ShapeError(f"generator grid size must be divisible by 4, got {self.size}")
        if self.base_width < 1 or self.n_resblocks < 0:
            raise ConfigError("base_width must be >= 1 and n_resblocks >= 0")

    @classmethod
    def full_scale(cls):
        return cls(base_width=64, n_resblocks=6, size=256)


class ResBlock(Module):
    def __init__(self, width, rng):
        super().__init__()
        self.conv1 = self.add_child("conv1", Conv2d(width, width, 3, 1, 1, rng))
        self.conv2 = self.add_child("conv2", Conv2d(width, width, 3, 1, 1, rng))

    def forward(self, x):
        return x + self.conv2(ad.relu(self.conv1(x)))


class Generator(Module):
    """Two stride-2 downsamplings, residual blocks at 1/4 resolution, two transposed upsamplings."""

    def __init__(self, cfg=GeneratorConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        w = cfg.base_width
        self.stem = self.add_child("stem", Conv2d(cfg.in_channels, w, 3, 1, 1, rng))
        self.down1 = self.add_child("down1", Conv2d(w, 2 * w, 4, 2, 1, rng))
        self.down2 = self.add_child("down2", Conv2d(2 * w, 4 * w, 4, 2, 1, rng))
        self.blocks = [self.add_child(f"res{i}", ResBlock(4 * w, rng)) for i in range(cfg.n_resblocks)]
        self.up1 = self.add_child("up1", ConvTranspose2d(4 * w, 2 * w, 4, 2, 1, rng))
        self.up2 = self.add_child("up2", ConvTranspose2d(2 * w, w, 4, 2, 1, rng))
        self.head = self.add_child("head", Conv2d(w, 1, 3, 1, 1, rng))

    def forward(self, x):
        x = ad.as_tensor(x)
        if x.data.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"generator expects (N,{self.cfg.in_channels},H,W), got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"generator input side must be divisible by 4, got {x.shape}")
        h = ad.relu(self.stem(x))
        h = ad.relu(self.down1(h))
        h = ad.relu(self.down2(h))
        for blk in self.blocks:
            h = blk(h)
        h = ad.relu(self.up1(h))
        h = ad.relu(self.up2(h))
        return ad.sigmoid(self.head(h))


def generator_param_count(cfg):
    w, c = cfg.base_width, cfg.in_channels
    return ((9 * c * w + w) + (16 * w * 2 * w + 2 * w) + (16 * 2 * w * 4 * w + 4 * w)
            + cfg.n_resblocks * 2 * (9 * 16 * w * w + 4 * w)
            + (16 * 4 * w * 2 * w + 2 * w) + (16 * 2 * w * w + w) + (9 * w + 1))


def generator_forward(cond, gen):
    return gen(cond)


# ---------------------------------------------------------------- discriminator

@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 3
    n_blocks: int = 4
    base_width: int = 16
    conditioning_mode: str = "conditional"

    def __post_init__(self):
        if self.in_channels != 3:
            raise ConfigError("discriminator input has 3 channels")
        if self.conditioning_mode not in CONDITIONING_MODES:
            raise ConfigError(f"conditioning_mode must be one of {CONDITIONING_MODES}")
        if self.n_blocks < 1 or self.base_width < 1:
            raise ConfigError("n_blocks and base_width must be positive")


class Discriminator(Module):
    """PatchGAN: stride-2 conv blocks, then a 1-channel conv and a sigmoid per patch."""

    def __init__(self, cfg=DiscriminatorConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        widths = [cfg.in_channels] + [cfg.base_width * 2 ** i for i in range(cfg.n_blocks)]
        self.blocks = [self.add_child(f"block{i}", Conv2d(widths[i], widths[i + 1], 4, 2, 1, rng))
                       for i in range(cfg.n_blocks)]
        self.head = self.add_child("head", Conv2d(widths[-1], 1, 3, 1, 1, rng))

    def forward(self, x):
        x = ad.as_tensor(x)
        if x.data.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"discriminator expects (N,{self.cfg.in_channels},H,W), got {x.shape}")
        f = 2 ** self.cfg.n_blocks
        if x.shape[2] % f or x.shape[3] % f:
            raise ShapeError(f"discriminator input side must be divisible by {f}, got {x.shape}")
        h = x
        for blk in self.blocks:
            h = ad.leaky_relu(blk(h), 0.2)
        return ad.sigmoid(self.head(h))


def discriminator_param_count(cfg):
    widths = [cfg.in_channels] + [cfg.base_width * 2 ** i for i in range(cfg.n_blocks)]
    n = sum(16 * a * b + b for a, b in zip(widths[:-1], widths[1:]))
    return n + 9 * widths[-1] + 1


def discriminator_input(candidate, cond, mode, real):
    """Assemble the 3-channel discriminator input.

    ``paper_literal``: two constant label planes, (1, 0) for real and (0, 1) for
    generated, plus the candidate map. ``conditional``: buildings, depth map and
    candidate. ``cond`` is the (N, 4, H, W) generator input array.
    """
    candidate = ad.as_tensor(candidate)
    n, _, h, w = candidate.shape
    if mode == "paper_literal":
        planes = np.zeros((n, 2, h, w))
        planes[:, 0 if real else 1] = 1.0
    elif mode == "conditional":
        c = cond.data if isinstance(cond, Tensor) else np.asarray(cond)
        planes = c[:, [0, 3]]
    else:
        raise ConfigError(f"unknown conditioning mode {mode!r}")
    return ad.concat([Tensor(planes), candidate], axis=1)


def discriminator_forward(inp, disc):
    return disc(inp)


def discriminator_score(patches):
    """Scalar realness score: mean over patch probabilities."""
    return ad.mean(patches)


# ---------------------------------------------------------------- task network

@dataclass(frozen=True)
class TinConfig:
    depth: int = 4
    convs_per_block: int = 3
    base_width: int = 8
    in_channels: int = 1

    def __post_init__(self):
        if self.depth < 1 or self.convs_per_block < 1 or self.base_width < 1 or self.in_channels < 1:
            raise ConfigError("UNet depth, convs_per_block, base_width and in_channels must be positive")


class UNet(Module):
    """Encoder blocks (convs then 2×2 pool) mirrored by decoder blocks
    (transposed-conv upsample, skip concatenation, convs), sigmoid head."""

    def __init__(self, cfg=TinConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        bw, nc = cfg.base_width, cfg.convs_per_block
        self.enc = []
        cin = cfg.in_channels
        for i in range(cfg.depth):
            w = bw * 2 ** i
            convs = [self.add_child(f"enc{i}.conv{j}", Conv2d(cin if j == 0 else w, w, 3, 1, 1, rng))
                     for j in range(nc)]
            self.enc.append(convs)
            cin = w
        self.dec = []
        for i in reversed(range(cfg.depth)):
            w = bw * 2 ** i
            up = self.add_child(f"dec{i}.up", ConvTranspose2d(cin, w, 2, 2, 0, rng))
            convs = [self.add_child(f"dec{i}.conv{j}", Conv2d(2 * w if j == 0 else w, w, 3, 1, 1, rng))
                     for j in range(nc)]
            self.dec.append((up, convs))
            cin = w
        self.head = self.add_child("head", Conv2d(bw, 1, 1, 1, 0, rng))

    def forward(self, x, return_skips=False):
        x = ad.as_tensor(x)
        f = 2 ** self.cfg.depth
        if x.data.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"UNet expects (N,{self.cfg.in_channels},H,W), got {x.shape}")
        if x.shape[2] % f or x.shape[3] % f:
            raise ShapeError(f"UNet input side must be divisible by {f}, got {x.shape}")
        skips = []
        h = x
        for convs in self.enc:
            for c in convs:
                h = ad.relu(c(h))
            skips.append(h)
            h = ad.max_pool2d(h)
        pairs = []
        for level, (up, convs) in enumerate(self.dec):
            h = ad.relu(up(h))
            skip = skips[self.cfg.depth - 1 - level]
            pairs.append((skip.shape, h.shape))
            h = ad.concat([h, skip], axis=1)
            for c in convs:
                h = ad.relu(c(h))
        out = ad.sigmoid(self.head(h))
        return (out, pairs) if return_skips else out


def unet_param_count(cfg):
    bw, nc = cfg.base_width, cfg.convs_per_block
    n = 0
    cin = cfg.in_channels
    for i in range(cfg.depth):
        w = bw * 2 ** i
        n += 9 * cin * w + w + (nc - 1) * (9 * w * w + w)
        cin = w
    for i in reversed(range(cfg.depth)):
        w = bw * 2 ** i
        n += 4 * cin * w + w + (9 * 2 * w * w + w) + (nc - 1) * (9 * w * w + w)
        cin = w
    return n + bw + 1


def tin_forward(rm, tin):
    return tin(rm)
