"""One-stage stochastic gradient ascent over designs and guide parameters.

Parameters live in named blocks (``lam`` for the unconstrained design,
``phi`` for the guide, ``psi`` for a likelihood critic). Each block has its
own exponentially decaying learning rate and its own Adam moments.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from . import gradients as gr
from .errors import ConfigError, ContractError, NumericalAbort

MAX_REJECTS = 10


@dataclass
class LRSchedule:
    """``lr_t = lr0 * (lr_final / lr0) ** (t / steps)``; constant when ``lr_final`` is None."""

    lr0: float = 1e-3
    lr_final: float = None
    steps: int = 1

    def __post_init__(self):
        if self.lr0 <= 0 or (self.lr_final is not None and self.lr_final <= 0):
            raise ConfigError("learning rates must be positive")
        if self.steps < 1:
            raise ConfigError("schedule needs at least one step")

    def rate(self, t):
        if self.lr_final is None:
            return self.lr0
        frac = min(max(t / self.steps, 0.0), 1.0)
        return self.lr0 * (self.lr_final / self.lr0) ** frac


class AdamState:
    """Adam moments per parameter block (ascent convention).

    :param shapes: mapping block name -> parameter shape.
    """

    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8, max_rejects=MAX_REJECTS):
        self.max_rejects = max_rejects
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0
        self.rejected = 0
        self.consecutive_rejects = 0
        self.diagnostics = []


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam ascent step.

    :param params: mapping block -> array (not modified).
    :param grads: mapping block -> gradient array (None skips the block).
    :param lr: float or mapping block -> float.
    :returns: ``(new_params, accepted)``. A non-finite gradient in any block
        rejects the whole step and leaves the counter unchanged.
    :raises NumericalAbort: after more than ``state.max_rejects`` consecutive rejections.
    """
    for k, g in grads.items():
        if g is None:
            continue
        if np.shape(g) != np.shape(params[k]):
            raise ContractError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(params[k])} for {k}")
        if not np.all(np.isfinite(g)):
            return _reject(state, params, f"non-finite gradient in block {k}")
    state.t += 1
    state.consecutive_rejects = 0
    b1, b2 = state.beta1, state.beta2
    out = dict(params)
    for k, g in grads.items():
        if g is None:
            continue
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        mhat = state.m[k] / (1 - b1 ** state.t)
        vhat = state.v[k] / (1 - b2 ** state.t)
        rate = lr[k] if isinstance(lr, dict) else lr
        out[k] = params[k] + rate * mhat / (np.sqrt(vhat) + state.eps)
    return out, True


def _reject(state, params, reason):
    state.rejected += 1
    state.consecutive_rejects += 1
    state.diagnostics.append({"step": state.t, "reason": reason})
    if state.consecutive_rejects > state.max_rejects:
        raise NumericalAbort(f"{state.consecutive_rejects} consecutive rejected steps: {reason}",
                             trace={"diagnostics": state.diagnostics[-state.max_rejects - 1:]})
    return params, False


@dataclass
class Objective:
    """What to ascend: bound kind, gradient modes and sample sizes."""

    bound: str = "ace"
    xi_mode: str = "reparam"
    phi_mode: str = "reparam"
    N: int = 10
    L: int = 10
    drop_dg_dxi: bool = False
    baseline: bool = False

    def tag(self):
        return f"{self.bound}/{self.xi_mode}/{self.phi_mode}"


@dataclass
class RunTrace:
    """Per-step record of one SGA run."""

    raw: np.ndarray
    smoothed: np.ndarray
    lr: np.ndarray
    designs: np.ndarray
    design_steps: np.ndarray
    checkpoints: list
    final_lam: np.ndarray
    final_design: np.ndarray
    final_phi: np.ndarray
    final_psi: np.ndarray
    wall_time: float
    rejected: int
    diagnostics: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.raw)


def smooth(values, window=200):
    """Exponential moving average with ``alpha = 2 / (window + 1)``."""
    alpha = 2.0 / (window + 1)
    out = np.empty(len(values))
    acc = None
    for i, v in enumerate(values):
        acc = v if acc is None else acc + alpha * (v - acc)
        out[i] = acc
    return out


def sga_run(model, objective, guide=None, steps=1000, seed=0, schedule=None, phi_schedule=None,
            transform=None, lam0=None, critic=None, checkpoint_every=0, design_every=1,
            jitter=0.0, fix_design=False, callback=None):
    """Jointly ascend a bound over the design and the guide.

    :param objective: an :class:`Objective`.
    :param guide: guide whose ``phi`` is updated in place at the end.
    :param schedule: :class:`LRSchedule` for the design block.
    :param phi_schedule: schedule for guide and critic blocks (defaults to ``schedule``).
    :param transform: constraint transform (defaults to ``model.transform()``).
    :param lam0: initial unconstrained design; default ``transform.initial``.
    :param fix_design: train only the guide (used when evaluating a fixed design).
    :param checkpoint_every: store a copy of ``phi`` every this many steps.
    :returns: :class:`RunTrace`.
    """
    rng = np.random.default_rng(seed)
    tr = transform if transform is not None else model.transform()
    schedule = schedule or LRSchedule(1e-3, None, steps)
    phi_schedule = phi_schedule or schedule
    lam = np.array(lam0, dtype=np.float64) if lam0 is not None else tr.initial(rng, jitter)
    if lam.shape != tuple(tr.shape):
        raise ContractError(f"initial design has shape {lam.shape}, expected {tuple(tr.shape)}")
    uses_guide = objective.bound != "pce" and guide is not None
    if objective.bound != "pce" and guide is None:
        raise ConfigError(f"bound {objective.bound!r} needs a guide")
    params = {"lam": lam}
    if uses_guide and objective.phi_mode != "none":
        params["phi"] = guide.phi.copy()
    if critic is not None and getattr(critic, "size", 0):
        params["psi"] = critic.psi.copy()
    state = AdamState({k: v.shape for k, v in params.items()})
    xi_mode = "none" if fix_design else objective.xi_mode

    raw = np.empty(steps)
    lrs = np.empty(steps)
    designs, design_steps, checkpoints = [], [], []
    t0 = time.perf_counter()
    work_guide = guide.copy() if uses_guide else None
    for step in range(steps):
        if work_guide is not None and "phi" in params:
            work_guide.phi = params["phi"]
        if "psi" in params:
            critic.psi = params["psi"]
        try:
            est = gr.gradient(model, params["lam"], objective.N, objective.L, rng,
                              kind=objective.bound, guide=work_guide, transform=tr,
                              xi_mode=xi_mode, phi_mode=objective.phi_mode if uses_guide else "none",
                              critic=critic, drop_dg_dxi=objective.drop_dg_dxi,
                              baseline=objective.baseline)
            grads = {"lam": est.xi_grad, "phi": est.phi_grad, "psi": est.psi_grad}
            value = est.value
        except NumericalAbort as exc:
            grads = {"lam": np.full_like(params["lam"], np.nan)}
            value = np.nan
            state.diagnostics.append({"step": step, "reason": str(exc)})
        grads = {k: v for k, v in grads.items() if k in params and v is not None}
        rate = schedule.rate(step)
        lr = {k: (rate if k == "lam" else phi_schedule.rate(step)) for k in params}
        params, accepted = adam_step(state, params, grads, lr)
        raw[step] = value
        lrs[step] = rate
        if design_every and step % design_every == 0:
            designs.append(np.asarray(tr.forward(params["lam"])))
            design_steps.append(step)
        if checkpoint_every and "phi" in params and (step + 1) % checkpoint_every == 0:
            checkpoints.append((step + 1, params["phi"].copy()))
        if callback is not None:
            callback(step, params, value)
    wall = time.perf_counter() - t0

    finite = np.where(np.isfinite(raw), raw, np.nan)
    filled = _ffill(finite)
    if uses_guide and "phi" in params:
        guide.phi = params["phi"].copy()
    if "psi" in params:
        critic.psi = params["psi"].copy()
    final_design = np.asarray(tr.forward(params["lam"]))
    return RunTrace(raw=raw, smoothed=smooth(filled), lr=lrs,
                    designs=np.array(designs), design_steps=np.array(design_steps, dtype=int),
                    checkpoints=checkpoints, final_lam=params["lam"].copy(),
                    final_design=final_design,
                    final_phi=params["phi"].copy() if "phi" in params else None,
                    final_psi=params["psi"].copy() if "psi" in params else None,
                    wall_time=wall, rejected=state.rejected, diagnostics=state.diagnostics)


def _ffill(x):
    out = np.array(x, dtype=np.float64)
    last = 0.0
    for i in range(len(out)):
        if np.isfinite(out[i]):
            last = out[i]
        else:
            out[i] = last
    return out
