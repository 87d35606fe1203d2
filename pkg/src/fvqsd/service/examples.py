"""Complete example documents, one per model family.

Served by ``GET /families`` and mirrored by the files under ``configs/``
in the repository root; each validates against ``ConfigDocument``.
"""

EXAMPLE_DOCUMENTS = {
    "galton-watson": {
        "model": {
            "family": "galton-watson",
            "offspring": {0: 0.6, 2: 0.4},
            "alpha": 4.0,
        },
        "experiment": {
            "kind": "conditional-decay",
            "times": [2, 4, 6, 8, 10, 12, 14, 16, 18, 20],
            "mode": "oracle",
        },
        "runtime": {"seed": 1234, "threads": 1, "out_dir": "results"},
    },
    "birth-death": {
        "model": {
            "family": "birth-death",
            "dimension": 1,
            "birth": {"kind": "constant", "coeff": 1.0},
            "death": {"kind": "constant", "coeff": 2.0},
            "absorption_override": 0.15,
        },
        "fv": {
            "n": 200,
            "horizon": 100.0,
            "observation_times": [25.0, 50.0, 75.0, 100.0],
        },
        "runtime": {"seed": 7, "threads": 1, "out_dir": "results"},
    },
    "multitype-galton-watson": {
        "model": {
            "family": "multitype-galton-watson",
            "rates": [1.0, 1.0],
            "offspring": [
                [{"n": [0, 0], "p": 0.6}, {"n": [0, 2], "p": 0.4}],
                [{"n": [0, 0], "p": 0.6}, {"n": [2, 0], "p": 0.4}],
            ],
            "alpha": 4.0,
        },
        "runtime": {"seed": 3, "threads": 1, "out_dir": "results"},
    },
    "diffusion": {
        "model": {
            "family": "diffusion",
            "dimension": 1,
            "drift_coeff": -1.0,
            "dispersion": 1.0,
            "killing_rate": 0.1,
            "beta": 1.0,
            "gamma_ell": 1.0,
            "rho": 0.2,
            "step_size": 0.01,
        },
        "fv": {
            "n": 100,
            "horizon": 20.0,
            "observation_times": [5.0, 10.0, 20.0],
        },
        "runtime": {"seed": 11, "threads": 1, "out_dir": "results"},
    },
}
