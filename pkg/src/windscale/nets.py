"""Critic and generator networks plus their size specs.

Critic: VGG-flavoured convolutional scorer. Stages double the width and halve
the resolution (stride pattern 1,2 per stage), then an adaptive mean pool and
a two-layer dense head produce one unbounded scalar per sample. No batch or
layer norm anywhere: the gradient penalty is taken per sample, so batch
statistics must not couple samples.

Generator: fuses an encoded fine-grid covariate stack with the coarse
predictor stack, refines with a chain of residual-in-residual dense blocks
(RRDB) under a global residual, then upsamples x2 per stage with pixel
shuffle, concatenating the matching-resolution covariate encoder skip before
each stage. The output head is two plain 3x3 convs with no output activation;
wind components are unbounded in normalized space. Everything is
fully convolutional, so the same weights run on any aligned domain size.

Weights use Kaiming fan-in init for the leaky-ReLU layers; the generator's
final conv starts near zero (std 0.01) so early outputs stay close to the
global residual path.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ShapeError

RESIDUAL_SCALE = 0.2  # residual branches enter at this weight (RRDB convention)


@dataclass(frozen=True)
class CriticSpec:
    in_channels: int = 2
    base_width: int = 64
    n_stages: int = 4  # each stage: conv s1 + conv s2, width doubles next stage
    lrelu_slope: float = 0.2

    def __post_init__(self):
        if self.in_channels < 1:
            raise ConfigurationError("critic in_channels must be >= 1")
        if self.base_width < 1 or self.n_stages < 1:
            raise ConfigurationError("critic base_width and n_stages must be >= 1")

    @property
    def min_input(self) -> int:
        return 2 ** self.n_stages


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int = 7
    cov_channels: int = 3  # 0 disables conditioning entirely
    out_channels: int = 2
    trunk_width: int = 64
    n_rrdb: int = 16
    growth: int = 32
    upscale_stages: int = 3  # x2 each => overall factor 8
    lrelu_slope: float = 0.2

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("generator channel counts must be >= 1")
        if self.cov_channels < 0:
            raise ConfigurationError("cov_channels must be >= 0")
        if self.n_rrdb < 1 or self.growth < 1:
            raise ConfigurationError("n_rrdb and growth must be >= 1")
        if self.upscale_stages < 1:
            raise ConfigurationError("upscale_stages must be >= 1")
        div = max(4, 2 ** (self.upscale_stages - 1))
        if self.trunk_width % div != 0:
            raise ConfigurationError(
                f"trunk_width {self.trunk_width} must be divisible by {div} "
                "(pixel shuffle and encoder width schedule)"
            )

    @property
    def scale(self) -> int:
        return 2 ** self.upscale_stages


def pixel_shuffle(x: torch.Tensor, factor: int = 2) -> torch.Tensor:
    """(B, C*f*f, H, W) -> (B, C, f*H, f*W); pure reindexing, value-preserving."""
    if x.ndim != 4:
        raise ShapeError(f"pixel_shuffle expects (B, C, H, W), got ndim={x.ndim}")
    if factor < 1:
        raise ConfigurationError(f"shuffle factor must be >= 1, got {factor}")
    if x.shape[1] % (factor * factor) != 0:
        raise ShapeError(
            f"channels {x.shape[1]} not divisible by factor^2={factor * factor}"
        )
    return F.pixel_shuffle(x, factor)


def pixel_unshuffle(x: torch.Tensor, factor: int = 2) -> torch.Tensor:
    """Exact inverse of pixel_shuffle."""
    if x.ndim != 4:
        raise ShapeError(f"pixel_unshuffle expects (B, C, H, W), got ndim={x.ndim}")
    if factor < 1:
        raise ConfigurationError(f"shuffle factor must be >= 1, got {factor}")
    if x.shape[2] % factor != 0 or x.shape[3] % factor != 0:
        raise ShapeError(
            f"spatial {tuple(x.shape[2:])} not divisible by factor {factor}"
        )
    return F.pixel_unshuffle(x, factor)


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _kaiming_init(module: nn.Module, slope: float) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=slope, mode="fan_in",
                                    nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class Critic(nn.Module):
    def __init__(self, spec: CriticSpec = CriticSpec()):
        super().__init__()
        self.spec = spec
        layers = []
        prev = spec.in_channels
        for i in range(spec.n_stages):
            width = spec.base_width * (2 ** i)
            layers += [nn.Conv2d(prev, width, 3, stride=1, padding=1),
                       nn.LeakyReLU(spec.lrelu_slope),
                       nn.Conv2d(width, width, 3, stride=2, padding=1),
                       nn.LeakyReLU(spec.lrelu_slope)]
            prev = width
        self.features = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(prev, 2 * prev),
            nn.LeakyReLU(spec.lrelu_slope),
            nn.Linear(2 * prev, 1),
        )
        _kaiming_init(self, spec.lrelu_slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4:
            raise ShapeError(f"critic expects (B, C, H, W), got ndim={x.ndim}")
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"critic got {x.shape[1]} channels, expected {self.spec.in_channels}"
            )
        m = self.spec.min_input
        if x.shape[2] < m or x.shape[3] < m:
            raise ShapeError(
                f"critic input {tuple(x.shape[2:])} smaller than minimum {m}x{m}"
            )
        return self.head(self.features(x)).squeeze(1)


class DenseBlock(nn.Module):
    """Five 3x3 convs with dense connectivity, residual at RESIDUAL_SCALE."""

    def __init__(self, width: int, growth: int, slope: float):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv2d(width + i * growth, growth, 3, padding=1) for i in range(4)
        )
        self.conv_out = nn.Conv2d(width + 4 * growth, width, 3, padding=1)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for conv in self.convs:
            feats.append(self.act(conv(torch.cat(feats, dim=1))))
        out = self.conv_out(torch.cat(feats, dim=1))
        return x + RESIDUAL_SCALE * out


class RRDB(nn.Module):
    """Residual-in-residual: three dense blocks under one outer residual."""

    def __init__(self, width: int, growth: int, slope: float):
        super().__init__()
        self.blocks = nn.Sequential(
            DenseBlock(width, growth, slope),
            DenseBlock(width, growth, slope),
            DenseBlock(width, growth, slope),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + RESIDUAL_SCALE * (self.blocks(x) - x)


class CovEncoder(nn.Module):
    """Strided conv pyramid over the fine covariates.

    Stage i halves resolution; widths run trunk/2^(n-1) ... trunk so the last
    output sits at coarse resolution with full trunk width. All stage outputs
    are returned for use as skips.
    """

    def __init__(self, cov_channels: int, trunk_width: int, stages: int, slope: float):
        super().__init__()
        self.stages = nn.ModuleList()
        prev = cov_channels
        for i in range(stages):
            width = trunk_width // (2 ** (stages - 1 - i))
            self.stages.append(nn.Sequential(
                nn.Conv2d(prev, width, 3, stride=2, padding=1),
                nn.LeakyReLU(slope),
            ))
            prev = width

    def forward(self, cov: torch.Tensor) -> list[torch.Tensor]:
        outs = []
        x = cov
        for stage in self.stages:
            x = stage(x)
            outs.append(x)
        return outs


class UpStage(nn.Module):
    """Concat skip (if any), conv to trunk width, pixel shuffle x2, conv back."""

    def __init__(self, width: int, skip_width: int, slope: float):
        super().__init__()
        self.conv_merge = nn.Conv2d(width + skip_width, width, 3, padding=1)
        self.conv_post = nn.Conv2d(width // 4, width, 3, padding=1)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor, skip: torch.Tensor | None) -> torch.Tensor:
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        x = self.act(self.conv_merge(x))
        x = pixel_shuffle(x, 2)
        return self.act(self.conv_post(x))


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec = GeneratorSpec()):
        super().__init__()
        self.spec = spec
        w = spec.trunk_width
        self.conv_in = nn.Conv2d(spec.in_channels, w, 3, padding=1)
        if spec.cov_channels > 0:
            self.encoder = CovEncoder(spec.cov_channels, w, spec.upscale_stages,
                                      spec.lrelu_slope)
            self.fuse = nn.Conv2d(2 * w, w, 1)
        else:
            self.encoder = None
            self.fuse = None
        self.rrdbs = nn.Sequential(*(
            RRDB(w, spec.growth, spec.lrelu_slope) for _ in range(spec.n_rrdb)
        ))
        self.trunk_conv = nn.Conv2d(w, w, 3, padding=1)
        self.upstages = nn.ModuleList()
        for i in range(spec.upscale_stages):
            skip_w = (w // (2 ** i)) if spec.cov_channels > 0 else 0
            self.upstages.append(UpStage(w, skip_w, spec.lrelu_slope))
        self.conv_hr = nn.Conv2d(w, w, 3, padding=1)
        self.conv_out = nn.Conv2d(w, spec.out_channels, 3, padding=1)
        self.act = nn.LeakyReLU(spec.lrelu_slope)
        _kaiming_init(self, spec.lrelu_slope)
        # start the output head near zero so early samples track the trunk
        nn.init.normal_(self.conv_out.weight, std=0.01)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, low: torch.Tensor, cov: torch.Tensor | None = None) -> torch.Tensor:
        spec = self.spec
        if low.ndim != 4:
            raise ShapeError(f"generator expects low (B, C, h, w), got ndim={low.ndim}")
        if low.shape[1] != spec.in_channels:
            raise ShapeError(
                f"generator got {low.shape[1]} predictor channels, expected {spec.in_channels}"
            )
        b, _, h, w_ = low.shape

        skips = None
        if spec.cov_channels == 0:
            if cov is not None:
                raise ShapeError("this generator is unconditional; covariates must be None")
        else:
            if cov is None:
                raise ShapeError("conditional generator needs a covariate stack")
            shared = cov.ndim == 3
            if shared:
                cov = cov.unsqueeze(0)
            if cov.ndim != 4:
                raise ShapeError(f"covariates must be (C, H, W) or (B, C, H, W), got ndim={cov.ndim}")
            if cov.shape[1] != spec.cov_channels:
                raise ShapeError(
                    f"got {cov.shape[1]} covariate channels, expected {spec.cov_channels}"
                )
            want = (h * spec.scale, w_ * spec.scale)
            if tuple(cov.shape[2:]) != want:
                raise ShapeError(
                    f"covariate grid {tuple(cov.shape[2:])} must be {want} "
                    f"for a ({h}, {w_}) coarse grid at scale {spec.scale}"
                )
            if not shared and cov.shape[0] != b:
                raise ShapeError(f"covariate batch {cov.shape[0]} != input batch {b}")
            skips = self.encoder(cov)
            if shared and b > 1:
                skips = [s.expand(b, -1, -1, -1) for s in skips]

        x = self.conv_in(low)
        if skips is not None:
            x = self.fuse(torch.cat([x, skips[-1]], dim=1))
        x = x + self.trunk_conv(self.rrdbs(x))
        for i, up in enumerate(self.upstages):
            skip = skips[len(self.upstages) - 1 - i] if skips is not None else None
            x = up(x, skip)
        x = self.act(self.conv_hr(x))
        return self.conv_out(x)


def build_critic(spec: CriticSpec = CriticSpec(), seed: int = 0,
                 dtype: torch.dtype = torch.float32) -> Critic:
    """Critic with reproducible init; global torch RNG is left untouched."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = Critic(spec)
    return net.to(dtype)


def build_generator(spec: GeneratorSpec = GeneratorSpec(), seed: int = 0,
                    dtype: torch.dtype = torch.float32) -> Generator:
    """Generator with reproducible init; global torch RNG is left untouched."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = Generator(spec)
    return net.to(dtype)
