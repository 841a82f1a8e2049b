"""Run, evaluate and replicate experiments described by a :class:`RunConfig`."""
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import autodiff as ad
from .. import bounds as bd
from ..errors import CapabilityError, ConfigError
from ..optim import LRSchedule, Objective, sga_run
from ..sequential import sequential_run
from . import io
from .oracles import TrapSpec, bound_trap, design_error, nmc_eig


# ---------------------------------------------------------------- helpers
def critic_features(model):
    """Generic critic features ``[theta, theta^2, theta (x) y]`` on flattened latents and outcomes."""
    names = model.latent_names

    def features(theta, y):
        parts = []
        for name in names:
            v = ad.value_of(theta[name])
            ev = model.latent_shapes[name]
            parts.append(np.reshape(v, v.shape[:v.ndim - len(ev)] + (-1,)))
        th = np.concatenate(np.broadcast_arrays(*parts), -1) if len(parts) > 1 else parts[0]
        yv = np.asarray(ad.value_of(y), dtype=np.float64)
        k = len(model.outcome_shape)
        yv = np.reshape(yv, yv.shape[:yv.ndim - k] + (-1,))
        th, yv = np.broadcast_arrays(th[..., :, None], yv[..., None, :])
        cross = (th * yv).reshape(th.shape[:-2] + (-1,))
        t = th[..., 0]
        return np.concatenate([t, t * t, cross], -1)

    th_dim = sum(int(np.prod(s)) if s else 1 for s in model.latent_shapes.values())
    y_dim = int(np.prod(model.outcome_shape)) if model.outcome_shape else 1
    return features, 2 * th_dim + th_dim * y_dim


def objective_of(config):
    return Objective(config.bound, config.xi_mode,
                     "none" if config.bound == "pce" else config.phi_mode, config.N, config.L)


def schedules_of(config, steps=None):
    steps = steps or config.steps
    xi = LRSchedule(config.lr0, config.lr_final, steps)
    phi = LRSchedule(config.phi_lr0, config.phi_lr_final, steps) if config.phi_lr0 else None
    return xi, phi


def replicate_seeds(root_seed, n):
    """Independent integer seeds for ``n`` replicates spawned from one root."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(root_seed).spawn(n)]


# ---------------------------------------------------------------- single run
def run_one(config, seed, out_dir=None, steps=None):
    """Optimise one design; write trace, design JSON and guide checkpoints.

    :returns: summary dict (also written as ``design.json``).
    """
    config.validate()
    model = config.build_model()
    guide = model.default_guide(seed=seed) if config.bound != "pce" else None
    critic = None
    if config.bound == "ace_lf":
        feats, nf = critic_features(model)
        critic = bd.Critic(feats, nf, seed=seed)
    sched, phi_sched = schedules_of(config, steps)
    trace = sga_run(model, objective_of(config), guide, steps=steps or config.steps, seed=seed,
                    schedule=sched, phi_schedule=phi_sched, critic=critic, jitter=config.jitter,
                    checkpoint_every=config.checkpoint_every)
    summary = {
        "config_hash": config.hash(), "seed": seed, "preset": config.preset,
        "bound": config.bound, "xi_mode": config.xi_mode, "steps": trace.steps,
        "final_design": trace.final_design, "final_lam": trace.final_lam,
        "final_smoothed": float(trace.smoothed[-1]), "wall_time": trace.wall_time,
        "rejected_steps": trace.rejected, "config": config.to_dict(),
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        io.write_trace(out_dir, trace, config.hash(), seed)
        if guide is not None:
            ck = os.path.join(out_dir, "checkpoints")
            os.makedirs(ck, exist_ok=True)
            for step, phi in trace.checkpoints:
                g = guide.copy()
                g.phi = phi
                g.save(os.path.join(ck, f"guide_step{step:07d}.json"))
            guide.save(os.path.join(out_dir, "guide_final.json"))
        io.write_json(os.path.join(out_dir, "design.json"), summary)
    summary["trace"] = trace
    summary["guide"] = guide
    return summary


# ---------------------------------------------------------------- evaluation
def evaluate_design(config, xi, seed=0):
    """Oracle evaluation of a saved design: analytic where possible, NMC for death."""
    model = config.build_model()
    xi = np.asarray(xi, dtype=np.float64)
    out = {"config_hash": config.hash(), "seed": seed, "design": xi}
    try:
        eig = float(model.analytic_eig(xi))
        out["analytic_eig"] = eig
    except CapabilityError:
        eig = None
    if hasattr(model, "normalized_error") and eig is not None:
        out["normalized_error"] = float(model.normalized_error(xi))
    try:
        star = model.optimal_design()
        out["design_error"] = design_error(xi, star)
        if hasattr(model, "uniform_design"):
            out["uniform_design_error"] = design_error(model.uniform_design(), star)
    except CapabilityError:
        pass
    ev = config.eval
    if eig is None and "nmc_N" in ev:
        est = nmc_eig(model, xi, int(ev["nmc_N"]), int(ev["nmc_L"]), np.random.default_rng(seed))
        out["nmc_eig"] = est.value
        out["nmc_stderr"] = est.stderr
    return out


def trap_spec_of(config, baseline=False):
    ev = config.eval
    steps = int(ev.get("baseline_train_steps" if baseline else "train_steps", 2000))
    return TrapSpec(train_steps=steps, lr=config.phi_lr0 or config.lr0,
                    eval_N=int(ev.get("eval_N", 10000)), eval_L=int(ev.get("eval_L", 500)))


def trap_design(config, xi, seed=0, guide=None, baseline=False):
    model = config.build_model()
    res = bound_trap(model, xi, trap_spec_of(config, baseline), seed=seed, guide=guide)
    res.meta.update(config_hash=config.hash(), seed=seed)
    return res


# ---------------------------------------------------------------- replicates
def _sweep_job(args):
    doc, seed, out_dir = args
    from .config import RunConfig
    cfg = RunConfig.from_dict(doc)
    s = run_one(cfg, seed, out_dir)
    ev = evaluate_design(cfg, s["final_design"], seed=seed)
    return {"seed": seed, "final_smoothed": s["final_smoothed"], "wall_time": s["wall_time"],
            "final_design": np.asarray(s["final_design"]).reshape(-1).tolist(),
            **{k: v for k, v in ev.items() if k not in ("design", "config_hash", "seed")}}


def sweep(config, n_replicates, root_seed=0, workers=1, out_dir=None):
    """Run replicates with spawned seeds (optionally in worker processes) and merge."""
    seeds = replicate_seeds(root_seed, n_replicates)
    jobs = [(config.to_dict(), s, os.path.join(out_dir, f"seed_{s}") if out_dir else None) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    if out_dir:
        keys = [k for k in rows[0] if k != "final_design"]
        io.write_csv(os.path.join(out_dir, "sweep.csv"), keys, ([r[k] for k in keys] for r in rows),
                     {"config_hash": config.hash(), "root_seed": root_seed})
    return rows


# ---------------------------------------------------------------- sequential
def run_sequential(config, seed, out_dir=None, rounds=None):
    model = config.build_model()
    ev = config.eval
    if "theta_star" not in ev:
        raise ConfigError(f"preset {config.preset!r} has no eval.theta_star to simulate outcomes from")
    theta_star = {k: np.asarray(v, dtype=np.float64) for k, v in ev["theta_star"].items()}
    sched, phi_sched = schedules_of(config)
    hist = sequential_run(model, objective_of(config), int(rounds or ev.get("rounds", 10)), theta_star,
                          design_steps=config.steps, vi_steps=int(ev.get("vi_steps", 1000)), seed=seed,
                          schedule=sched, phi_schedule=phi_sched,
                          vi_schedule=LRSchedule(ev.get("vi_lr0", 0.02), ev.get("vi_lr_final"),
                                                 int(ev.get("vi_steps", 1000))),
                          vi_samples=int(ev.get("vi_samples", 16)), jitter=config.jitter)
    if out_dir:
        meta = {"config_hash": config.hash(), "seed": seed}
        names = list(theta_star)
        d0 = np.asarray(hist.designs[0]).size
        o0 = np.asarray(hist.outcomes[0]).size
        cols = (["round"] + [f"design_{i}" for i in range(d0)] + [f"outcome_{i}" for i in range(o0)]
                + ["entropy"] + [f"rmse_{n}" for n in names])
        rows = []
        for m, d, y in zip(hist.metrics, hist.designs, hist.outcomes):
            rows.append([m["round"], *np.ravel(d), *np.ravel(y), m["entropy"], *[m["rmse"][n] for n in names]])
        io.write_csv(os.path.join(out_dir, "sequential.csv"), cols, rows, meta)
        io.write_json(os.path.join(out_dir, "history.json"),
                      {**meta, "config": config.to_dict(), "history": hist.to_dict()})
    return hist
