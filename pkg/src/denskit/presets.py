"""Named ready-to-run configurations for the command line."""
from __future__ import annotations

import copy

PRESETS = {
    # one electron, unit charge: rho is exact and every check has a
    # closed-form reference
    "hydrogen-default": {
        "model": {"kind": "hydrogenic_product", "rates": [0.5]},
        "potential": {"kind": "atom", "charge": 1.0},
        "eps": None,
        "level": 2,
        "alpha_max": 8,
        "points": [[1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [-0.9, 0.0, 0.9]],
        "seed": 0,
        "samples": {"support": 20000, "norms": 30000, "potential": 2048,
                    "qmc": 16384},
    },
    # two uncorrelated electrons with distinct decay rates; the marginal
    # has a closed form, so quadrature is checked end to end
    "n2-product": {
        "model": {"kind": "hydrogenic_product", "rates": [0.5, 0.8]},
        "potential": {"kind": "atom", "charge": 1.0},
        "eps": None,
        "level": 2,
        "alpha_max": 3,
        "points": [[1.0, 0.0, 0.0], [0.4, 0.4, 0.1], [0.0, 2.0, 0.0]],
        "seed": 0,
        "samples": {"support": 20000, "norms": 30000, "potential": 2048,
                    "qmc": 16384},
    },
    # two electrons with a pair-coalescence factor; no closed form, checks
    # run against the direct-grid route and finite differences
    "n2-correlated": {
        "model": {"kind": "correlated_pair", "a": 0.5, "lambda": 0.5,
                  "E": -0.5},
        "potential": {"kind": "atom", "charge": 1.0},
        "eps": None,
        "level": 2,
        "alpha_max": 3,
        "points": [[1.0, 0.0, 0.0], [0.4, 0.4, 0.1], [0.0, 2.0, 0.0]],
        "seed": 0,
        "samples": {"support": 20000, "norms": 30000, "potential": 2048,
                    "qmc": 16384},
    },
}


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {name!r}; available: {known}")
    return copy.deepcopy(PRESETS[name])
