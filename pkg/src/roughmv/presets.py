"""Named run configurations for the figure recipes.

Fields a recipe does not pin down (``V0``, ``phi`` and ``r`` for the psi
recipes, which do not depend on them) are filled with the values of the
recipe sharing the same volatility parameters.
"""

import math

ALPHAS = [0.6, 0.7, 0.8, 0.9, 1.0]

_FIG1A_MODEL = {"V0": 0.04, "kappa": 0.1, "phi": 0.3, "sigma": 0.03, "rho": -0.7, "theta": 5.0, "r": 0.03, "T": 1.0}
_FIG1B_MODEL = {"V0": 0.5, "kappa": 2.25, "phi": 0.04, "sigma": 0.04, "rho": -0.56, "theta": 0.15, "r": 0.01, "T": 1.35}
_FIG2_MODEL = dict(_FIG1B_MODEL, x0=1.0, c_excess=0.1)
_FIG4_MODEL = {
    "V0": 0.04, "kappa": 0.1, "phi": 0.3, "sigma": 0.03, "rho": -0.7, "theta": 0.6, "r": 0.03, "T": 1.0, "x0": 1.0,
}

PRESETS = {
    "fig1a": {
        "model": _FIG1A_MODEL,
        "kernel": {"kind": "fractional", "alpha": 1.0},
        "experiment": {"recipe": "psi", "alphas": ALPHAS},
    },
    "fig1b": {
        "model": _FIG1B_MODEL,
        "kernel": {"kind": "fractional", "alpha": 1.0},
        "experiment": {"recipe": "psi", "alphas": ALPHAS},
    },
    "fig2-small-sigma": {
        "model": _FIG2_MODEL,
        "kernel": {"kind": "fractional", "alpha": 1.0},
        "experiment": {"recipe": "strategy", "alphas": ALPHAS, "fixed_V": 0.5, "fixed_X": 1.0},
    },
    "fig2-big-sigma": {
        "model": dict(_FIG2_MODEL, sigma=3.0),
        "kernel": {"kind": "fractional", "alpha": 1.0},
        "experiment": {"recipe": "strategy", "alphas": ALPHAS, "fixed_V": 0.5, "fixed_X": 1.0},
    },
    "fig4": {
        "model": _FIG4_MODEL,
        "kernel": {"kind": "fractional", "alpha": 1.0},
        "experiment": {
            "recipe": "frontier",
            "alphas": [0.55, 0.6, 0.7, 0.8, 0.9, 1.0],
            "c_excess_min": 0.01,
            "c_excess_max": 0.5,
            "c_num": 50,
        },
    },
    # market parameters must come from a user file; only the design is fixed here
    "fig3": {
        "model": {"r": 0.01, "T": 1.0, "x0": 1.0, "c": math.exp(0.11)},
        "kernel": {"kind": "fractional", "alpha": 0.6},
        "simulation": {"n_paths": 3000, "n_steps": 250, "scheme": "lifted"},
        "experiment": {"recipe": "simulate"},
    },
}

USER_FILE_REQUIRED = {"fig3": ("V0", "kappa", "phi", "sigma", "rho", "theta")}
