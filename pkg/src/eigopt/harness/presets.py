"""Named experiment presets (desk-scale defaults).

Each preset yields a :class:`RunConfig` for a given bound. Evaluation sizes
sit under ``eval``; ``full_scale=True`` swaps in the larger evaluation
sizes.
"""
from ..errors import ConfigError
from .config import RunConfig

# default (N, L) per bound
SAMPLES = {"ace": (10, 10), "pce": (10, 10), "ba": (100, 0), "ace_lf": (10, 10)}


def _samples(bound):
    return SAMPLES[bound]


def toy(bound="ace", **kw):
    N, L = _samples(bound)
    return RunConfig(preset="toy", model_name="toy", bound=bound, xi_mode="reparam", N=N, L=L,
                     steps=4000, lr0=1e-2, eval={"analytic": True})


def death(bound="ace", **kw):
    N, L = _samples(bound)
    return RunConfig(preset="death", model_name="death", bound=bound, xi_mode="rb", N=N, L=L,
                     steps=10000, lr0=1e-3,
                     eval={"nmc_N": 20000, "nmc_L": 20000, "nmc_full_N": 200000})


def regression(bound="ace", full_scale=False, **kw):
    N, L = _samples(bound)
    ev = {"train_steps": 5000, "eval_N": 10000, "eval_L": 500, "baseline_draws": 50,
          "baseline_train_steps": 1000}
    if full_scale:
        ev.update(train_steps=20000, eval_N=100000, eval_L=2500)
    return RunConfig(preset="regression", model_name="regression", model={"n": 20, "p": 20},
                     bound=bound, xi_mode="reparam", N=N, L=L, steps=20000, lr0=1e-3, eval=ev)


ADVERTISING_LR_FINAL = {"ace": 1e-4, "pce": 1e-5, "ba": 3e-4, "ace_lf": 1e-4}
ADVERTISING_STEPS = {"ace": 10000, "pce": 20000, "ba": 18000, "ace_lf": 10000}


def advertising(bound="ace", dim=4, full_steps=False, **kw):
    N, L = _samples(bound)
    steps = ADVERTISING_STEPS[bound] if full_steps else 10000
    return RunConfig(preset="advertising", model_name="advertising",
                     model={"D": int(dim), "alpha": 0.1, "sigma": 1.0}, bound=bound,
                     xi_mode="reparam", N=N, L=L, steps=steps, lr0=0.1,
                     lr_final=ADVERTISING_LR_FINAL[bound], eval={"analytic": True})


def docking(bound="ace", full_scale=False, **kw):
    N, L = _samples(bound)
    ev = {"train_steps": 5000, "eval_N": 100000, "eval_L": 500}
    if full_scale:
        ev.update(train_steps=25000, eval_N=4000000, eval_L=2000)
    # design lr decays 1e-2 -> 1e-3 so 5e4 steps leave the midpoint start; guide stays at 1e-3
    return RunConfig(preset="docking", model_name="docking", model={"n": 100}, bound=bound,
                     xi_mode="score", N=N, L=L, steps=50000, lr0=1e-2, lr_final=1e-3,
                     phi_lr0=1e-3, eval=ev)


CES_STEPS = {"ace": 1500, "pce": 2500, "ba": 5000, "ace_lf": 1500}


def ces(bound="ace", **kw):
    N, L = _samples(bound)
    return RunConfig(preset="ces", model_name="ces", bound=bound, xi_mode="score", N=N, L=L,
                     steps=500, lr0=1e-2, phi_lr0=1e-2, jitter=0.5,
                     eval={"rounds": 10, "vi_steps": 1000, "vi_lr0": 0.02, "vi_lr_final": 0.001,
                           "vi_samples": 32, "full_steps": CES_STEPS[bound],
                           "theta_star": {"rho": 0.6, "alpha": [0.2, 0.3, 0.5], "u": 2.718281828459045}})


PRESETS = {"toy": toy, "death": death, "regression": regression, "advertising": advertising,
           "docking": docking, "ces": ces}


def get_preset(name, bound="ace", **kw):
    try:
        fn = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if bound not in SAMPLES:
        raise ConfigError(f"unknown bound {bound!r}")
    return fn(bound=bound, **kw)
