"""WGAN-GP losses with optional frequency separation.

Critic objective:  E[C(fake)] - E[C(real)] + lambda * GP
Generator objective:  -gamma * E[C(gen)] + alpha * MSE-content

The gradient penalty GP is the mean squared distance of the critic's input
gradient norm from 1, evaluated at per-sample random convex combinations of
real and fake.

Frequency separation splits fields with a k x k box filter (reflection
padding) into low = box(x) and high = x - low:

    NONE  critic and content both see full fields
    FS    critic sees only high parts (including inside the penalty);
          the generator's adversarial term uses high(gen), content compares
          low parts only
    PFS   content compares low parts, but the adversarial game stays in its
          original full-field formulation; set pfs_critic_on_high=True to
          move the critic (and the matching generator adversarial term) onto
          high parts instead

Both loss entry points return a LossReport carrying the differentiable total
plus its decomposition, so training can backward() on the total and log the
terms without recomputing anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, NumericError, ShapeError


class FsMode(str, Enum):
    NONE = "NONE"
    FS = "FS"
    PFS = "PFS"


@dataclass(frozen=True)
class LossConfig:
    lambda_gp: float = 10.0
    gamma_adv: float = 0.01
    alpha_content: float = 5.0
    fs_mode: FsMode = FsMode.NONE
    fs_kernel: int = 5
    pfs_critic_on_high: bool = False

    def __post_init__(self):
        # lambda_gp = 0 is allowed so a pure supervised degenerate mode
        # (gamma = lambda = 0) stays constructible for diagnostics
        if self.lambda_gp < 0 or self.gamma_adv < 0 or self.alpha_content < 0:
            raise ConfigurationError("loss weights must be >= 0")
        object.__setattr__(self, "fs_mode", FsMode(self.fs_mode))
        k = self.fs_kernel
        if k < 3 or k % 2 == 0:
            raise ConfigurationError(f"fs_kernel must be odd and >= 3, got {k}")


@dataclass
class LossReport:
    """Differentiable totals plus their decomposition (all 0-d tensors).

    critic_loss = adv_term + lambda * gp_term, with
    adv_term = E[C(fake)] - E[C(real)] and wasserstein_estimate = -adv_term.
    generator_loss = -gamma * adv_term + alpha * content_term, with
    adv_term = E[C(gen)] there. Fields not produced by a call are None.
    """

    critic_loss: torch.Tensor | None = None
    generator_loss: torch.Tensor | None = None
    adv_term: torch.Tensor | None = None
    gp_term: torch.Tensor | None = None
    content_term: torch.Tensor | None = None
    wasserstein_estimate: torch.Tensor | None = None

    def scalars(self) -> dict[str, float]:
        out = {}
        for name in ("critic_loss", "generator_loss", "adv_term", "gp_term",
                     "content_term", "wasserstein_estimate"):
            v = getattr(self, name)
            if v is not None:
                out[name] = float(v.detach())
        return out


def _as_bchw(x: torch.Tensor) -> tuple[torch.Tensor, int]:
    if x.ndim == 2:
        return x[None, None], 2
    if x.ndim == 3:
        return x[None], 3
    if x.ndim == 4:
        return x, 4
    raise ShapeError(f"expected 2-4 dims, got ndim={x.ndim}")


def lowpass(x: torch.Tensor, kernel: int) -> torch.Tensor:
    """k x k box filter with reflection padding; accepts 2-4D tensors."""
    k = int(kernel)
    if k < 1 or k % 2 == 0:
        raise ConfigurationError(f"box kernel must be odd and >= 1, got {k}")
    x4, ndim = _as_bchw(x)
    if k == 1:
        return x
    pad = (k - 1) // 2
    h, w = x4.shape[2], x4.shape[3]
    # reflection padding needs pad strictly smaller than the input extent
    if pad >= h or pad >= w:
        raise ConfigurationError(
            f"kernel {k} too large for field {h}x{w} with reflection padding"
        )
    c = x4.shape[1]
    weight = torch.full((c, 1, k, k), 1.0 / (k * k), dtype=x4.dtype, device=x4.device)
    out = F.conv2d(F.pad(x4, (pad, pad, pad, pad), mode="reflect"), weight, groups=c)
    if ndim == 2:
        return out[0, 0]
    if ndim == 3:
        return out[0]
    return out


def split_frequencies(x: torch.Tensor, kernel: int) -> tuple[torch.Tensor, torch.Tensor]:
    """(low, high) with high defined as x - low, so low + high reconstructs x."""
    low = lowpass(x, kernel)
    return low, x - low


def highpass(x: torch.Tensor, kernel: int) -> torch.Tensor:
    return split_frequencies(x, kernel)[1]


def gradient_penalty(critic, real: torch.Tensor, fake: torch.Tensor,
                     eps: torch.Tensor | None = None) -> torch.Tensor:
    """Two-sided gradient penalty at random interpolates.

    eps, one scalar per batch item, defaults to U[0, 1] draws from torch's
    global RNG; training passes its own draws for reproducibility. The
    returned scalar keeps the graph (create_graph=True) so it can be part of
    a loss that is backpropagated into critic parameters.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    if real.ndim != 4 or real.shape[0] < 1:
        raise ShapeError("gradient_penalty expects non-empty (B, C, H, W) stacks")
    b = real.shape[0]
    if eps is None:
        eps = torch.rand(b, dtype=real.dtype, device=real.device)
    if eps.numel() != b:
        raise ShapeError(f"eps has {eps.numel()} values for batch {b}")
    if float(eps.min()) < 0.0 or float(eps.max()) > 1.0:
        raise ConfigurationError("eps values must lie in [0, 1]")
    eps = eps.reshape(b, 1, 1, 1).to(dtype=real.dtype, device=real.device)

    mixed = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic(mixed)
    if not torch.isfinite(scores).all():
        raise NumericError("critic produced non-finite scores inside gradient penalty")
    grads = torch.autograd.grad(scores.sum(), mixed, create_graph=True)[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def _critic_view(x: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """What the critic gets to see under the configured separation mode."""
    if cfg.fs_mode == FsMode.FS:
        return highpass(x, cfg.fs_kernel)
    if cfg.fs_mode == FsMode.PFS and cfg.pfs_critic_on_high:
        return highpass(x, cfg.fs_kernel)
    return x


def critic_loss(critic, real: torch.Tensor, fake: torch.Tensor, cfg: LossConfig,
                eps: torch.Tensor | None = None) -> LossReport:
    """Critic objective on one batch; fake must already be detached."""
    if real.shape != fake.shape:
        raise ShapeError(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    cr = _critic_view(real, cfg)
    cf = _critic_view(fake, cfg)
    adv = critic(cf).mean() - critic(cr).mean()
    gp = gradient_penalty(critic, cr, cf, eps=eps)
    total = adv + cfg.lambda_gp * gp
    return LossReport(critic_loss=total, adv_term=adv, gp_term=gp,
                      wasserstein_estimate=-adv)


def generator_loss(critic, gen_out: torch.Tensor, target: torch.Tensor,
                   cfg: LossConfig) -> LossReport:
    """Generator objective on one batch; gradients flow through gen_out."""
    if gen_out.shape != target.shape:
        raise ShapeError(f"gen_out {tuple(gen_out.shape)} vs target {tuple(target.shape)}")
    if cfg.fs_mode == FsMode.NONE:
        adv_in = gen_out
        content = F.mse_loss(gen_out, target)
    else:
        adv_in = _critic_view(gen_out, cfg)
        content = F.mse_loss(lowpass(gen_out, cfg.fs_kernel),
                             lowpass(target, cfg.fs_kernel))
    adv = critic(adv_in).mean()
    total = -cfg.gamma_adv * adv + cfg.alpha_content * content
    return LossReport(generator_loss=total, adv_term=adv, content_term=content)
