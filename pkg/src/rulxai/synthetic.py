"""Synthetic stand-in for the PHM08 training trajectories.

The real challenge file is not redistributable here, so this module produces a
file with the same 26-column layout and the same qualitative structure: six
operating regimes drawn at random each cycle, sensors dominated by the regime
baseline, a small exponential health drift towards failure, and measurement
noise. Unit 1 runs for 223 cycles by default, matching the engine studied in
the pipeline.
"""

from __future__ import annotations

import numpy as np

from .ingest import write_records

# (altitude kft, Mach, throttle angle) for the six flight conditions
REGIMES = np.array(
    [
        [0.0, 0.0, 100.0],
        [10.0, 0.25, 100.0],
        [20.0, 0.70, 100.0],
        [25.0, 0.62, 60.0],
        [35.0, 0.84, 100.0],
        [42.0, 0.84, 100.0],
    ]
)

# per-sensor: nominal level, regime sensitivity, degradation sensitivity, noise std.
# A degradation sensitivity of 0 means the sensor only reflects the operating regime.
_SENSORS = np.array(
    [
        [518.67, -0.9, 0.0, 0.0],
        [642.5, -0.5, 1.0, 0.45],
        [1590.0, -0.6, 9.0, 6.0],
        [1408.0, -0.7, 12.0, 8.0],
        [14.62, -0.8, 0.0, 0.0],
        [21.61, -0.7, 0.0, 0.02],
        [553.5, -0.5, -0.9, 0.8],
        [2388.0, -0.1, 0.08, 0.07],
        [9050.0, -0.2, 8.0, 20.0],
        [1.30, -0.3, 0.0, 0.0],
        [47.5, -0.4, 0.5, 0.25],
        [521.4, -0.5, -0.7, 0.7],
        [2388.0, -0.1, 0.08, 0.07],
        [8140.0, -0.1, 5.0, 18.0],
        [8.44, -0.2, 0.05, 0.035],
        [0.03, -0.1, 0.0, 0.0],
        [393.0, -0.4, 3.0, 1.5],
        [2388.0, -0.1, 0.0, 0.0],
        [100.0, -0.2, 0.0, 0.0],
        [38.8, -0.6, -0.4, 0.18],
        [23.3, -0.6, -0.25, 0.11],
    ]
)


def phm08_like_matrix(n_units=5, unit1_cycles=223, seed=0):
    """Raw 26-column matrix for ``n_units`` run-to-failure trajectories."""
    rng = np.random.default_rng(seed)
    rows = []
    for unit in range(1, n_units + 1):
        life = unit1_cycles if unit == 1 else int(rng.integers(130, 360))
        onset = rng.uniform(0.2, 0.5)
        rate = rng.uniform(3.0, 5.0)
        for cycle in range(1, life + 1):
            frac = cycle / life
            health = 0.0 if frac < onset else np.expm1(rate * (frac - onset)) / np.expm1(rate * (1 - onset))
            health += 0.05 * frac
            regime = REGIMES[rng.integers(len(REGIMES))]
            settings = regime + rng.normal(0.0, [0.003, 0.0003, 0.0])
            load = (regime[0] / 42.0) + 0.5 * regime[1] - 0.3 * (regime[2] / 100.0)
            nominal, regime_sens, deg_sens, noise = _SENSORS.T
            sensors = nominal * (1.0 + 0.25 * regime_sens * load)
            sensors = sensors + deg_sens * health + rng.normal(0.0, 1.0, len(nominal)) * noise
            rows.append([unit, cycle, *settings, *sensors])
    return np.asarray(rows, dtype=np.float64)


def write_phm08_like(path, n_units=5, unit1_cycles=223, seed=0):
    values = phm08_like_matrix(n_units=n_units, unit1_cycles=unit1_cycles, seed=seed)
    write_records(path, values)
    return values


def iid_regression_dataset(n_train=1000, n_test=500, d=3, noise=0.1, seed=0):
    """Uniform inputs on [0, 1]^d, target sin(2*pi*x0) + x1^2 + Gaussian noise.

    Rows are i.i.d., so any held-out subset is exchangeable with the training rows.
    """
    from .ingest import TabularDataset

    if d < 2:
        raise ValueError("d must be >= 2")
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    X = rng.uniform(0.0, 1.0, size=(n, d))
    y = np.sin(2 * np.pi * X[:, 0]) + X[:, 1] ** 2 + noise * rng.standard_normal(n)
    train = np.zeros(n, dtype=bool)
    train[:n_train] = True
    return TabularDataset(
        feature_names=[f"x{j}" for j in range(d)],
        X=X,
        y=y,
        unit_ids=np.zeros(n, dtype=np.int64),
        train_mask=train,
        test_mask=~train,
        seed=seed,
        metadata={"generator": "iid_regression", "noise": noise},
    )
