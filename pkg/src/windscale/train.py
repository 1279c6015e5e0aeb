"""Adversarial training loop, checkpointing, and the metrics log.

One training step consumes one forecast hour: it draws crops_per_pair random
aligned crops, normalizes them with the frozen training stats, and walks the
resulting batches through the critic/generator schedule (critic_iters critic
updates, then one generator update, repeating). With crops_per_pair equal to
(critic_iters + 1) * batch_size a step is exactly one schedule round.

All stochastic choices (crop offsets, gradient-penalty mixing weights, the
per-epoch pair order) come from numpy generators that are either stored in
the checkpoint or derived purely from (seed, epoch), so a resumed run
reproduces the uninterrupted one bit for bit when dtype and data match.
Validation crops are seeded per pair timestamp, independent of training
state, so validation MSE (in normalized space) is comparable across runs.

Checkpoints carry both networks, both Adam states, the step counter, the RNG
state, the fitted normalization, the architecture specs, and the loss config,
so inference and fine-tuning need nothing else. Setting the environment
variable WINDSCALE_DETERMINISTIC=1 forces fresh runs to float64 and turns on
torch's deterministic algorithms.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, NumericError
from .grids import FACTOR, SamplePair, validate_pair
from .losses import LossConfig, LossReport, critic_loss, generator_loss
from .nets import (Critic, CriticSpec, Generator, GeneratorSpec, build_critic,
                   build_generator)
from .prep import NormStats, fit_norm, normalize_pair, save_norm

DETERMINISTIC_ENV = "WINDSCALE_DETERMINISTIC"

# fixed stream tags so the different RNG consumers never collide
_TAG_STEP, _TAG_VAL, _TAG_EPOCH = 17, 23, 29

LOG_COLUMNS = ("step", "phase", "fs_mode", "critic_loss", "adv_term", "gp_term",
               "wasserstein", "gen_loss", "gen_adv", "content", "val_mse")


def deterministic_mode() -> bool:
    return os.environ.get(DETERMINISTIC_ENV, "") not in ("", "0")


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int = 100
    critic_iters: int = 5
    batch_size: int = 32
    crops_per_pair: int = 192
    crop_size: int = 128
    lr: float = 2.5e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    loss: LossConfig = LossConfig()
    val_crops_per_pair: int = 32
    val_every: int = 1
    interval_len: int = 25
    checkpoint_every: int = 50
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if self.critic_iters < 1:
            raise ConfigurationError("critic_iters must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.crops_per_pair < self.batch_size or self.crops_per_pair % self.batch_size:
            raise ConfigurationError(
                f"crops_per_pair ({self.crops_per_pair}) must be a positive "
                f"multiple of batch_size ({self.batch_size})"
            )
        if self.crop_size < 2 * FACTOR or self.crop_size % FACTOR:
            raise ConfigurationError(
                f"crop_size must be a multiple of {FACTOR} and >= {2 * FACTOR}"
            )
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.val_crops_per_pair < 1 or self.val_every < 1:
            raise ConfigurationError("val_crops_per_pair and val_every must be >= 1")
        if self.interval_len < 1 or self.checkpoint_every < 1:
            raise ConfigurationError("interval_len and checkpoint_every must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if not isinstance(self.loss, LossConfig):
            object.__setattr__(self, "loss", LossConfig(**dict(self.loss)))


def _torch_dtype(name: str) -> torch.dtype:
    return torch.float64 if name == "float64" else torch.float32


def resolve_dtype(cfg: TrainConfig) -> torch.dtype:
    if deterministic_mode():
        return torch.float64
    return _torch_dtype(cfg.dtype)


@dataclass
class TrainState:
    generator: Generator
    critic: Critic
    opt_g: torch.optim.Adam
    opt_c: torch.optim.Adam
    step: int
    rng: np.random.Generator
    norm: NormStats
    gen_spec: GeneratorSpec
    critic_spec: CriticSpec
    loss_cfg: LossConfig
    dtype: torch.dtype
    best: dict | None = None  # {"step": int, "val_mse": float}


def init_state(gen_spec: GeneratorSpec, critic_spec: CriticSpec,
               cfg: TrainConfig, norm: NormStats) -> TrainState:
    dtype = resolve_dtype(cfg)
    gen = build_generator(gen_spec, seed=cfg.seed, dtype=dtype)
    critic = build_critic(critic_spec, seed=cfg.seed + 1, dtype=dtype)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr,
                             betas=(cfg.adam_beta1, cfg.adam_beta2))
    opt_c = torch.optim.Adam(critic.parameters(), lr=cfg.lr,
                             betas=(cfg.adam_beta1, cfg.adam_beta2))
    rng = np.random.default_rng([cfg.seed, _TAG_STEP])
    return TrainState(generator=gen, critic=critic, opt_g=opt_g, opt_c=opt_c,
                      step=0, rng=rng, norm=norm, gen_spec=gen_spec,
                      critic_spec=critic_spec, loss_cfg=cfg.loss, dtype=dtype)


def params_digest(module: torch.nn.Module) -> str:
    """Stable hash of all parameter values, for freeze checks."""
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _aligned_offsets(rng: np.random.Generator, hw: tuple[int, int],
                     size: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = hw
    tops = rng.integers(0, (h - size) // FACTOR + 1, size=n) * FACTOR
    lefts = rng.integers(0, (w - size) // FACTOR + 1, size=n) * FACTOR
    return tops, lefts


def _crop_stacks(pair: SamplePair, tops, lefts, size: int):
    """Stacked (low, high, cov) crop arrays from an already-normalized pair."""
    k = size // FACTOR
    low = np.stack([pair.low.data[:, t // FACTOR:t // FACTOR + k,
                                  l // FACTOR:l // FACTOR + k]
                    for t, l in zip(tops, lefts)])
    high = np.stack([pair.high.data[:, t:t + size, l:l + size]
                     for t, l in zip(tops, lefts)])
    cov = np.stack([pair.covariates.data[:, t:t + size, l:l + size]
                    for t, l in zip(tops, lefts)])
    return low, high, cov


def _check_finite(report: LossReport, names: tuple[str, ...], step: int) -> None:
    for name in names:
        v = getattr(report, name)
        if v is not None and not bool(torch.isfinite(v)):
            raise NumericError(f"non-finite {name} at step {step}; aborting")


def training_step(state: TrainState, pair: SamplePair, cfg: TrainConfig) -> dict:
    """One full schedule pass over crops of one pair; mutates state in place."""
    problems = validate_pair(pair)
    if problems:
        raise ConfigurationError(f"invalid pair {pair.timestamp}: {problems}")
    h, w = pair.high.shape_hw
    if cfg.crop_size > h or cfg.crop_size > w:
        raise ConfigurationError(
            f"crop_size {cfg.crop_size} exceeds domain {h}x{w}"
        )
    uses_cov = state.gen_spec.cov_channels > 0

    tops, lefts = _aligned_offsets(state.rng, (h, w), cfg.crop_size,
                                   cfg.crops_per_pair)
    npair = normalize_pair(pair, state.norm)
    low_np, high_np, cov_np = _crop_stacks(npair, tops, lefts, cfg.crop_size)
    low_all = torch.as_tensor(low_np, dtype=state.dtype)
    high_all = torch.as_tensor(high_np, dtype=state.dtype)
    cov_all = torch.as_tensor(cov_np, dtype=state.dtype) if uses_cov else None

    cycle = cfg.critic_iters + 1
    n_batches = cfg.crops_per_pair // cfg.batch_size
    crit_reports, gen_reports = [], []
    critic_updates = gen_updates = 0

    for i in range(n_batches):
        sl = slice(i * cfg.batch_size, (i + 1) * cfg.batch_size)
        lowb, highb = low_all[sl], high_all[sl]
        covb = cov_all[sl] if uses_cov else None
        if i % cycle < cfg.critic_iters:
            with torch.no_grad():
                fake = state.generator(lowb, covb)
            eps = torch.as_tensor(state.rng.random(cfg.batch_size), dtype=state.dtype)
            rep = critic_loss(state.critic, highb, fake, cfg.loss, eps=eps)
            _check_finite(rep, ("critic_loss", "adv_term", "gp_term"), state.step)
            state.opt_c.zero_grad(set_to_none=True)
            rep.critic_loss.backward()
            state.opt_c.step()
            crit_reports.append(rep.scalars())
            critic_updates += 1
        else:
            gen_out = state.generator(lowb, covb)
            rep = generator_loss(state.critic, gen_out, highb, cfg.loss)
            _check_finite(rep, ("generator_loss", "adv_term", "content_term"), state.step)
            state.opt_g.zero_grad(set_to_none=True)
            state.opt_c.zero_grad(set_to_none=True)
            rep.generator_loss.backward()
            state.opt_g.step()
            gen_reports.append(rep.scalars())
            gen_updates += 1

    state.step += 1

    def _mean(reports, key):
        vals = [r[key] for r in reports if key in r]
        return float(np.mean(vals)) if vals else None

    return {
        "step": state.step,
        "critic_updates": critic_updates,
        "gen_updates": gen_updates,
        "fs_mode": cfg.loss.fs_mode.value,
        "critic_loss": _mean(crit_reports, "critic_loss"),
        "adv_term": _mean(crit_reports, "adv_term"),
        "gp_term": _mean(crit_reports, "gp_term"),
        "wasserstein": _mean(crit_reports, "wasserstein_estimate"),
        "gen_loss": _mean(gen_reports, "generator_loss"),
        "gen_adv": _mean(gen_reports, "adv_term"),
        "content": _mean(gen_reports, "content_term"),
    }


def validate(state: TrainState, val_pairs, cfg: TrainConfig) -> float:
    """Mean squared error of the generator on seeded validation crops.

    Crops are drawn from a generator keyed by (seed, pair timestamp) only, so
    the same validation set is evaluated at every call and across runs.
    Computed in normalized space.
    """
    val_pairs = list(val_pairs)
    if not val_pairs:
        raise ConfigurationError("validate needs at least one pair")
    uses_cov = state.gen_spec.cov_channels > 0
    total_se, total_n = 0.0, 0
    for pair in val_pairs:
        h, w = pair.high.shape_hw
        if cfg.crop_size > h or cfg.crop_size > w:
            raise ConfigurationError(f"crop_size {cfg.crop_size} exceeds domain {h}x{w}")
        rng = np.random.default_rng([cfg.seed, _TAG_VAL,
                                     zlib.crc32(pair.timestamp.encode())])
        tops, lefts = _aligned_offsets(rng, (h, w), cfg.crop_size,
                                       cfg.val_crops_per_pair)
        npair = normalize_pair(pair, state.norm)
        low_np, high_np, cov_np = _crop_stacks(npair, tops, lefts, cfg.crop_size)
        with torch.no_grad():
            for i in range(0, cfg.val_crops_per_pair, cfg.batch_size):
                sl = slice(i, min(i + cfg.batch_size, cfg.val_crops_per_pair))
                lowb = torch.as_tensor(low_np[sl], dtype=state.dtype)
                highb = torch.as_tensor(high_np[sl], dtype=state.dtype)
                covb = torch.as_tensor(cov_np[sl], dtype=state.dtype) if uses_cov else None
                out = state.generator(lowb, covb)
                total_se += float(((out - highb) ** 2).sum())
                total_n += highb.numel()
    return total_se / total_n


# --- checkpoint files -------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    meta = {
        "format": 1,
        "step": state.step,
        "dtype": "float64" if state.dtype == torch.float64 else "float32",
        "gen_spec": dataclasses.asdict(state.gen_spec),
        "critic_spec": dataclasses.asdict(state.critic_spec),
        "loss": dataclasses.asdict(state.loss_cfg),
        "rng_state": state.rng.bit_generator.state,
        "best": state.best,
        "norm": state.norm.to_dict(),
    }
    torch.save({
        "meta_json": json.dumps(meta),
        "generator": state.generator.state_dict(),
        "critic": state.critic.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_c": state.opt_c.state_dict(),
    }, path)


def load_checkpoint(path, lr: float = 2.5e-4,
                    betas: tuple[float, float] = (0.5, 0.9)) -> TrainState:
    """Rebuild a TrainState exactly as saved.

    lr/betas seed the rebuilt Adam objects before their state dicts are
    loaded; the loaded state dict restores the true hyperparameters.
    """
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise ConfigurationError(f"checkpoint not found: {path}") from None
    meta = json.loads(blob["meta_json"])
    gen_spec = GeneratorSpec(**meta["gen_spec"])
    critic_spec = CriticSpec(**meta["critic_spec"])
    loss_cfg = LossConfig(**meta["loss"])
    dtype = _torch_dtype(meta["dtype"])
    gen = build_generator(gen_spec, seed=0, dtype=dtype)
    critic = build_critic(critic_spec, seed=0, dtype=dtype)
    gen.load_state_dict(blob["generator"])
    critic.load_state_dict(blob["critic"])
    opt_g = torch.optim.Adam(gen.parameters(), lr=lr, betas=betas)
    opt_c = torch.optim.Adam(critic.parameters(), lr=lr, betas=betas)
    opt_g.load_state_dict(blob["opt_g"])
    opt_c.load_state_dict(blob["opt_c"])
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(generator=gen, critic=critic, opt_g=opt_g, opt_c=opt_c,
                      step=int(meta["step"]), rng=rng,
                      norm=NormStats.from_dict(meta["norm"]),
                      gen_spec=gen_spec, critic_spec=critic_spec,
                      loss_cfg=loss_cfg, dtype=dtype, best=meta["best"])


# --- metrics log -------------------------------------------------------------


def append_log(path, row: dict) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        if new:
            writer.writeheader()
        out = {}
        for k in LOG_COLUMNS:
            v = row.get(k)
            out[k] = "" if v is None else v
        writer.writerow(out)


def read_log(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no metrics log at {path}")
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row = {}
            for k, v in raw.items():
                if v == "" or v is None:
                    row[k] = None
                elif k in ("step",):
                    row[k] = int(v)
                elif k in ("phase", "fs_mode"):
                    row[k] = v
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def interval_minima(rows, what: str = "val_mse") -> list[tuple[int, float]]:
    """(step, value) of interval-averaged rows, for curve comparisons."""
    return [(r["step"], r[what]) for r in rows
            if r["phase"] == "interval" and r.get(what) is not None]


def best_interval(rows, what: str = "val_mse") -> tuple[int, float]:
    pts = interval_minima(rows, what)
    if not pts:
        raise ConfigurationError("no interval rows in metrics log")
    return min(pts, key=lambda p: p[1])


# --- the loop ----------------------------------------------------------------


def fit(train_pairs, val_pairs, cfg: TrainConfig, out_dir,
        gen_spec: GeneratorSpec | None = None,
        critic_spec: CriticSpec | None = None,
        state: TrainState | None = None) -> TrainState:
    """Train (or continue training) until cfg.max_steps, logging as it goes.

    Writes metrics.csv, norm_stats.json, periodic ckpt_step*.pt files, the
    running best-validation checkpoint best.pt, and last.pt at the end.
    """
    train_pairs, val_pairs = list(train_pairs), list(val_pairs)
    if not train_pairs:
        raise ConfigurationError("no training pairs")
    if not val_pairs:
        raise ConfigurationError("no validation pairs")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if deterministic_mode():
        torch.use_deterministic_algorithms(True)

    if state is None:
        gen_spec = gen_spec or GeneratorSpec()
        critic_spec = critic_spec or CriticSpec()
        norm = fit_norm(train_pairs)
        state = init_state(gen_spec, critic_spec, cfg, norm)
        log_path = out_dir / "metrics.csv"
        if log_path.exists():
            log_path.unlink()
    else:
        if gen_spec is not None and gen_spec != state.gen_spec:
            raise ConfigurationError(
                f"architecture mismatch: requested {gen_spec}, checkpoint has {state.gen_spec}"
            )
        if critic_spec is not None and critic_spec != state.critic_spec:
            raise ConfigurationError(
                f"architecture mismatch: requested {critic_spec}, checkpoint has {state.critic_spec}"
            )
        state.loss_cfg = cfg.loss
        log_path = out_dir / "metrics.csv"
    if cfg.max_steps <= state.step:
        raise ConfigurationError(
            f"max_steps {cfg.max_steps} does not extend checkpoint step {state.step}"
        )

    save_norm(out_dir / "norm_stats.json", state.norm)

    n_pairs = len(train_pairs)
    window_vals: list[float] = []
    if state.step > 0 and log_path.exists():
        # drop any rows past the checkpoint and rebuild the running interval
        # window, so resuming reproduces the uninterrupted log
        rows = [r for r in read_log(log_path) if r["step"] <= state.step]
        log_path.unlink()
        for r in rows:
            append_log(log_path, r)
        boundary = (state.step // cfg.interval_len) * cfg.interval_len
        window_vals = [r["val_mse"] for r in rows
                       if r["phase"] == "train" and r.get("val_mse") is not None
                       and r["step"] > boundary]
    while state.step < cfg.max_steps:
        epoch, pos = divmod(state.step, n_pairs)
        order = np.random.default_rng([cfg.seed, _TAG_EPOCH, epoch]).permutation(n_pairs)
        pair = train_pairs[int(order[pos])]
        summary = training_step(state, pair, cfg)

        row = {k: summary.get(k) for k in LOG_COLUMNS}
        row["phase"] = "train"
        if state.step % cfg.val_every == 0 or state.step == cfg.max_steps:
            v = validate(state, val_pairs, cfg)
            row["val_mse"] = v
            window_vals.append(v)
            if state.best is None or v < state.best["val_mse"]:
                state.best = {"step": state.step, "val_mse": v}
                save_checkpoint(state, out_dir / "best.pt")
        append_log(log_path, row)

        if state.step % cfg.interval_len == 0 and window_vals:
            append_log(log_path, {
                "step": state.step, "phase": "interval",
                "fs_mode": cfg.loss.fs_mode.value,
                "val_mse": float(np.mean(window_vals)),
            })
            window_vals = []

        if state.step % cfg.checkpoint_every == 0:
            save_checkpoint(state, out_dir / f"ckpt_step{state.step:06d}.pt")

    save_checkpoint(state, out_dir / "last.pt")
    return state


def fine_tune(ckpt_path, new_loss: LossConfig, train_pairs, val_pairs,
              cfg: TrainConfig, out_dir,
              gen_spec: GeneratorSpec | None = None,
              critic_spec: CriticSpec | None = None) -> TrainState:
    """Continue from a checkpoint under a (possibly different) loss config.

    Parameters, optimizer state, step counter, and RNG state all carry over;
    only the loss changes. Passing the specs asserts the checkpoint matches
    the architecture the caller expects.
    """
    state = load_checkpoint(ckpt_path, lr=cfg.lr,
                            betas=(cfg.adam_beta1, cfg.adam_beta2))
    cfg = dataclasses.replace(cfg, loss=new_loss)
    return fit(train_pairs, val_pairs, cfg, out_dir,
               gen_spec=gen_spec, critic_spec=critic_spec, state=state)
