"""Forward noising, the noise schedule, and the reverse ancestral sampler.

Forward marginal:  z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps
Reverse update:    mean = (z_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
with injected noise sigma_t^2 = beta_t for t > 0 and sigma_0 = 0, so the
final step is deterministic.  The sampler walks denoising iterations
i = 0 .. N-1 against diffusion steps t = N-1-i (noisiest first).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .conditioning import (
    BlockAssignment,
    ConditionEmbedding,
    StepSchedule,
    condition_at,
    unconditioned,
    uniform_blocks,
)

__all__ = [
    "NoiseSchedule",
    "SamplerConfig",
    "DenoiserBackend",
    "build_schedule",
    "forward_noise",
    "ancestral_step",
    "sample",
]


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Arrays beta, alpha = 1 - beta and abar = cumprod(alpha).

    Range checks only; :func:`build_schedule` guarantees the product
    relation between the arrays.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = self.beta.shape[0]
        if n < 1 or self.alpha.shape != (n,) or self.alpha_bar.shape != (n,):
            raise ValueError("schedule arrays must share one length >= 1")
        if np.any(self.beta <= 0.0) or np.any(self.beta >= 1.0):
            raise ValueError("beta values must lie strictly inside (0, 1)")
        if np.any(self.alpha_bar <= 0.0) or np.any(self.alpha_bar > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if n > 1 and np.any(np.diff(self.alpha_bar) >= 0.0):
            raise ValueError("alpha_bar must decrease strictly")

    @property
    def n_steps(self) -> int:
        return self.beta.shape[0]


def build_schedule(
    n_steps: int, beta_min: float = 1e-4, beta_max: float = 0.02
) -> NoiseSchedule:
    """Linear beta schedule between the two bounds."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(
            f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
        )
    beta = np.linspace(beta_min, beta_max, n_steps)
    alpha = 1.0 - beta
    return NoiseSchedule(beta, alpha, np.cumprod(alpha))


def _check_step(sched, t) -> None:
    n = len(sched.beta)
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr >= n):
        raise ValueError(f"step index {t} outside [0, {n})")


def forward_noise(z0, t, eps, sched) -> np.ndarray:
    """Closed-form forward marginal sample at step ``t``.

    Accepts a single vector with scalar ``t`` or a batch of rows with a
    per-row ``t``.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"z0 and eps differ in shape: {z0.shape} vs {eps.shape}")
    _check_step(sched, t)
    a_bar = np.asarray(sched.alpha_bar)[t]
    if z0.ndim == 2 and np.ndim(a_bar) == 1:
        a_bar = a_bar[:, None]
    return np.sqrt(a_bar) * z0 + np.sqrt(1.0 - a_bar) * eps


def ancestral_step(z_t, t, eps_hat, sched, noise) -> np.ndarray:
    """One reverse update from step ``t`` to ``t - 1``.

    Uses the eps-parameterised posterior mean and sigma_t^2 = beta_t;
    at ``t = 0`` the noise argument is ignored (sigma_0 = 0).
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if z_t.shape != eps_hat.shape or z_t.shape != noise.shape:
        raise ValueError(
            "z_t, eps_hat and noise differ in shape: "
            f"{z_t.shape}, {eps_hat.shape}, {noise.shape}"
        )
    t = int(t)
    _check_step(sched, t)
    beta = sched.beta[t]
    mean = (z_t - (beta / np.sqrt(1.0 - sched.alpha_bar[t])) * eps_hat) / np.sqrt(
        sched.alpha[t]
    )
    if t == 0:
        return mean
    return mean + np.sqrt(beta) * noise


@runtime_checkable
class DenoiserBackend(Protocol):
    """What the sampler needs from a denoiser.

    Backends that understand per-block conditioning additionally expose
    ``predict_eps_blocks(z, t, assign)``.
    """

    @property
    def noise_schedule(self) -> NoiseSchedule: ...

    @property
    def dim(self) -> int: ...

    @property
    def frame_shape(self) -> tuple[int, int]: ...

    def predict_eps(self, z: np.ndarray, t: int, cond: ConditionEmbedding) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int
    sampler_kind: str = "ancestral"
    guidance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.sampler_kind not in ("ancestral", "deterministic"):
            raise ValueError(
                f"sampler_kind must be 'ancestral' or 'deterministic', "
                f"got {self.sampler_kind!r}"
            )
        if not np.isfinite(self.guidance_scale) or self.guidance_scale < 0.0:
            raise ValueError("guidance_scale must be finite and >= 0")


def _predict(denoiser, z, t, cond, block_assign):
    if block_assign is None:
        return denoiser.predict_eps(z, t, cond)
    return denoiser.predict_eps_blocks(z, t, block_assign)


def sample(
    denoiser: DenoiserBackend,
    schedule: StepSchedule,
    cfg: SamplerConfig,
    block_assign: BlockAssignment | None = None,
) -> np.ndarray:
    """Run the reverse process and return a trajectory of shape
    ``denoiser.frame_shape``.

    Iteration ``i`` queries the schedule's condition for ``i`` and
    denoises diffusion step ``t = N - 1 - i``.  When ``block_assign`` is
    given, conditioning enters solely through the per-block assignment
    (identical at every step) and the backend must support blocks.
    Output is bit-reproducible for a fixed (seed, schedule, parameters);
    metric code never touches the sampler's generator.
    """
    sched = denoiser.noise_schedule
    n = cfg.n_steps
    if sched.n_steps != n:
        raise ValueError(
            f"backend noise schedule has {sched.n_steps} steps, sampler expects {n}"
        )
    if schedule.n_steps != n:
        raise ValueError(
            f"conditioning schedule covers {schedule.n_steps} steps, sampler runs {n}"
        )
    if block_assign is not None and not hasattr(denoiser, "predict_eps_blocks"):
        raise ValueError(
            "block assignment requires a block-structured denoiser backend"
        )
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal(denoiser.dim)
    ancestral = cfg.sampler_kind == "ancestral"
    guided = cfg.guidance_scale != 1.0
    uncond = unconditioned(schedule.width) if guided else None
    uncond_assign = (
        uniform_blocks(uncond, block_assign.n_blocks)
        if guided and block_assign is not None
        else None
    )
    zeros = np.zeros(denoiser.dim)
    for i in range(n):
        t = n - 1 - i
        cond = condition_at(schedule, i)
        eps_hat = _predict(denoiser, z, t, cond, block_assign)
        if guided:
            eps_un = _predict(denoiser, z, t, uncond, uncond_assign)
            eps_hat = eps_un + cfg.guidance_scale * (eps_hat - eps_un)
        noise = rng.standard_normal(denoiser.dim) if ancestral else zeros
        z = ancestral_step(z, t, eps_hat, sched, noise)
    n_frames, frame_dim = denoiser.frame_shape
    return z.reshape(n_frames, frame_dim)
