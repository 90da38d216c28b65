"""Per-depth-frame compressed-sensing reconstruction.

Solves ``min f(x)  s.t.  ||A x - y||_2 <= delta`` where ``f`` is anisotropic
total variation or the pixel l1 norm and ``A`` applies selected rows of the
fast basis.  ``f`` is replaced by its Huber smoothing with parameter `mu`
and minimized with Nesterov's accelerated scheme, shrinking `mu`
geometrically over a few continuation stages (the NESTA algorithm of
Becker, Bobin and Candes).  Because ``A A^T = n I`` the projection onto the
residual ball is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .basis import MaskSchedule, SubsampledOperator

__all__ = [
    "SolverConfig",
    "FrameResult",
    "ReconstructionResult",
    "tv_norm",
    "l1_norm",
    "objective_value",
    "smoothed_objective",
    "smoothed_gradient",
    "lipschitz_constant",
    "reconstruct_frame",
    "reconstruct_frames",
    "stack_frames",
]


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    `smoothing_mu` is the final smoothing; ``None`` means
    ``smoothing_ratio`` times the initial value ``0.9 * max|A^T y| / n``.
    `max_iters` bounds each continuation stage.  `data_fidelity_delta`
    ``None`` takes the noise level from the measurement variances.
    """

    objective: Literal["tv", "l1"] = "tv"
    smoothing_mu: Optional[float] = None
    smoothing_ratio: float = 1e-3
    tolerance: float = 1e-7
    max_iters: int = 3000
    continuation_steps: int = 5
    data_fidelity_delta: Optional[float] = None

    def __post_init__(self):
        if self.objective not in ("tv", "l1"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.smoothing_mu is not None and not self.smoothing_mu > 0:
            raise ValueError("smoothing_mu must be positive")
        if not 0 < self.smoothing_ratio <= 1:
            raise ValueError("smoothing_ratio must lie in (0, 1]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1 or self.continuation_steps < 1:
            raise ValueError("max_iters and continuation_steps must be >= 1")
        if self.data_fidelity_delta is not None and self.data_fidelity_delta < 0:
            raise ValueError("data_fidelity_delta must be nonnegative")


@dataclass
class FrameResult:
    image: np.ndarray
    iterations: int
    residual: float
    delta: float
    converged: bool
    objective_history: list = field(default_factory=list)
    stage_objectives: list = field(default_factory=list)
    mu_history: list = field(default_factory=list)


@dataclass
class ReconstructionResult:
    frames: list
    depth_bins: np.ndarray
    iterations_used: list
    residuals: list
    converged: list
    objective_histories: list
    deltas: list

    @classmethod
    def from_frames(cls, results, depth_bins):
        return cls(
            frames=[r.image for r in results],
            depth_bins=np.asarray(depth_bins, dtype=float),
            iterations_used=[r.iterations for r in results],
            residuals=[r.residual for r in results],
            converged=[r.converged for r in results],
            objective_histories=[r.objective_history for r in results],
            deltas=[r.delta for r in results],
        )


def _diff(x):
    return x[:, 1:] - x[:, :-1], x[1:, :] - x[:-1, :]


def _diff_adjoint(gx, gy, shape):
    out = np.zeros(shape)
    out[:, :-1] -= gx
    out[:, 1:] += gx
    out[:-1, :] -= gy
    out[1:, :] += gy
    return out


def tv_norm(image) -> float:
    """Anisotropic total variation: sum of absolute neighbour differences."""
    x = np.atleast_2d(np.asarray(image, dtype=float))
    dx, dy = _diff(x)
    return float(np.abs(dx).sum() + np.abs(dy).sum())


def l1_norm(image) -> float:
    return float(np.abs(np.asarray(image, dtype=float)).sum())


def _check_objective(objective):
    if objective not in ("tv", "l1"):
        raise ValueError(f"unknown objective {objective!r}")


def objective_value(image, objective="tv") -> float:
    _check_objective(objective)
    return tv_norm(image) if objective == "tv" else l1_norm(image)


def _huber(t, mu):
    a = np.abs(t)
    return np.where(a <= mu, t * t / (2 * mu), a - mu / 2)


def smoothed_objective(image, smoothing_mu, objective="tv") -> float:
    """Huber-smoothed objective; within ``mu / 2`` per term of the true one."""
    _check_objective(objective)
    x = np.atleast_2d(np.asarray(image, dtype=float))
    if objective == "tv":
        dx, dy = _diff(x)
        return float(_huber(dx, smoothing_mu).sum() + _huber(dy, smoothing_mu).sum())
    return float(_huber(x, smoothing_mu).sum())


def smoothed_gradient(image, smoothing_mu, objective="tv") -> np.ndarray:
    if not smoothing_mu > 0:
        raise ValueError("smoothing_mu must be positive")
    x = np.atleast_2d(np.asarray(image, dtype=float))
    if objective == "tv":
        dx, dy = _diff(x)
        return _diff_adjoint(np.clip(dx / smoothing_mu, -1, 1), np.clip(dy / smoothing_mu, -1, 1), x.shape)
    _check_objective(objective)
    return np.clip(x / smoothing_mu, -1, 1)


def lipschitz_constant(smoothing_mu, objective="tv") -> float:
    """Bound on the gradient's Lipschitz constant (``||D||^2 <= 8`` in 2-D)."""
    _check_objective(objective)
    return (8.0 if objective == "tv" else 1.0) / smoothing_mu


def _smoothed_value_and_grad(x, mu, objective):
    if objective == "tv":
        dx, dy = _diff(x)
        ux, uy = np.clip(dx / mu, -1, 1), np.clip(dy / mu, -1, 1)
        val = float((ux * dx).sum() + (uy * dy).sum() - 0.5 * mu * ((ux * ux).sum() + (uy * uy).sum()))
        return val, _diff_adjoint(ux, uy, x.shape)
    u = np.clip(x / mu, -1, 1)
    return float((u * x).sum() - 0.5 * mu * (u * u).sum()), u


def reconstruct_frame(y, schedule: MaskSchedule, shape, cfg: SolverConfig = SolverConfig(),
                      delta: Optional[float] = None, dc: Optional[float] = None) -> FrameResult:
    """Recover one depth frame from its measurement vector.

    Parameters
    ----------
    y : array, shape (m,)
        Differential (+/-1 row) measurements.
    schedule : MaskSchedule
        Rows that produced `y`.
    shape : (width, height)
    cfg : SolverConfig
    delta : float, optional
        Residual bound; overrides ``cfg.data_fidelity_delta``.
    dc : float, optional
        Measured sum of the image.  Appended as an all-ones row when row 0
        is not scheduled; without it the image mean is left at zero.

    Returns
    -------
    FrameResult
        Image of shape ``(height, width)``.  ``converged`` is False when any
        continuation stage ran out of iterations; the last iterate is kept.
    """
    width, height = shape
    if width * height != schedule.basis.n:
        raise ValueError(f"{width}x{height} image does not match basis size {schedule.basis.n}")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != schedule.m:
        raise ValueError(f"expected {schedule.m} measurements, got {y.size}")
    if dc is not None and 0 not in schedule.selected_rows:
        schedule = MaskSchedule(schedule.basis, (0,) + schedule.selected_rows, schedule.repeats)
        y = np.concatenate(([dc], y))
    op = SubsampledOperator(schedule)
    n, m = op.n, op.m
    if delta is None:
        delta = cfg.data_fidelity_delta if cfg.data_fidelity_delta is not None else 0.0
    img_shape = (height, width)
    scale = math.sqrt(n)
    yt = y / scale
    eps = delta / scale

    def A(v):  # normalized rows, A A^T = I
        return op.forward(v) / scale

    def At(u):
        return (op.adjoint(u) / scale).reshape(img_shape)

    def project(v, Av):
        r = Av - yt
        nr = float(np.linalg.norm(r))
        if nr <= eps:
            return v, Av
        c = 1.0 - eps / nr
        return v - c * At(r), Av - c * r

    x = At(yt)
    Ax = A(x)
    mu0 = 0.9 * float(np.max(np.abs(x))) if np.any(x) else 1.0
    mu_f = cfg.smoothing_mu if cfg.smoothing_mu is not None else cfg.smoothing_ratio * mu0
    mu_f = min(mu_f, mu0)
    steps = cfg.continuation_steps
    gamma = (mu_f / mu0) ** (1.0 / steps)
    tol0 = max(0.1, cfg.tolerance)
    tol_gamma = (cfg.tolerance / tol0) ** (1.0 / steps)

    result = FrameResult(image=x, iterations=0, residual=0.0, delta=float(delta), converged=True)
    xk, Axk = x, Ax
    for stage in range(1, steps + 1):
        mu = mu0 * gamma ** stage
        tol = tol0 * tol_gamma ** stage
        L = lipschitz_constant(mu, cfg.objective)
        x0, Ax0 = xk, Axk
        acc = np.zeros(img_shape)
        Aacc = np.zeros(m)
        recent = []
        stage_done = False
        yk, Ayk = xk, Axk
        for k in range(cfg.max_iters):
            fval, g = _smoothed_value_and_grad(xk, mu, cfg.objective)
            Ag = A(g)
            yk, Ayk = project(xk - g / L, Axk - Ag / L)
            alpha = 0.5 * (k + 1)
            acc += alpha * g
            Aacc += alpha * Ag
            zk, Azk = project(x0 - acc / L, Ax0 - Aacc / L)
            tau = 2.0 / (k + 3)
            xk = tau * zk + (1 - tau) * yk
            Axk = tau * Azk + (1 - tau) * Ayk
            fy = smoothed_objective(yk, mu, cfg.objective)
            result.objective_history.append(fy)
            result.mu_history.append(mu)
            result.iterations += 1
            if len(recent) >= 10:
                fbar = sum(recent[-10:]) / 10
                if abs(fy - fbar) <= tol * max(abs(fbar), np.finfo(float).tiny):
                    stage_done = True
                    recent.append(fy)
                    break
            recent.append(fy)
        if not stage_done:
            result.converged = False
        # restart the next stage from the feasible iterate
        xk, Axk = yk, A(yk)
        result.stage_objectives.append(objective_value(yk, cfg.objective))
    result.image = xk
    result.residual = float(np.linalg.norm(op.forward(xk) - y))
    return result


def reconstruct_frames(frame_set, shape, cfg: SolverConfig = SolverConfig()) -> ReconstructionResult:
    """Reconstruct every depth frame of a DepthFrameSet independently."""
    results = []
    for b in range(frame_set.n_frames):
        delta = cfg.data_fidelity_delta
        if delta is None:
            delta = frame_set.noise_level(b)
        dc = None if frame_set.dc is None else float(frame_set.dc[b])
        results.append(reconstruct_frame(frame_set.measurements[:, b], frame_set.schedule, shape,
                                         cfg, delta, dc))
    return ReconstructionResult.from_frames(results, frame_set.depth_bins)


def stack_frames(frames, depth_bins, occupancy_threshold: float = 0.5) -> np.ndarray:
    """Merge depth frames into points ``(x_pixel, y_pixel, depth_m, intensity)``.

    A pixel is kept in a frame when its value is at least
    ``occupancy_threshold * max(frame)``; a pixel kept by several frames goes
    to the one where it is brightest.
    """
    frames = [np.asarray(f, dtype=float) for f in frames]
    if not frames:
        raise ValueError("no frames to stack")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ValueError("frames must share one shape")
    best = np.full(shape, -np.inf)
    owner = np.full(shape, -1)
    for k, f in enumerate(frames):
        peak = f.max()
        if not peak > 0:
            continue
        claim = (f >= occupancy_threshold * peak) & (f > best)
        best[claim] = f[claim]
        owner[claim] = k
    yy, xx = np.nonzero(owner >= 0)
    depth = np.asarray(depth_bins, dtype=float)[owner[yy, xx]]
    return np.column_stack([xx, yy, depth, best[yy, xx]]).astype(float)
