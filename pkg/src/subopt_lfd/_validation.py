"""Input checks shared by the estimators."""

import numpy as np


def check_points(x, y=None, min_points=4):
    """Normalise ``(x, y)`` arrays or a sequence of pairs into two float vectors."""
    if y is None:
        pts = np.asarray(x, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("expected a sequence of (eta, y) pairs")
        x, y = pts[:, 0], pts[:, 1]
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"x and y differ in length: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("points must be finite")
    if len(x) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(x)}")
    if min_points >= 4 and len(np.unique(x)) < 2:
        raise ValueError("need at least two distinct noise levels")
    return x, y


def check_dataset(dataset, min_levels=1):
    levels = np.unique(dataset.etas)
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if len(levels) < min_levels:
        raise ValueError(f"need at least {min_levels} distinct noise levels, got {len(levels)}")
    return dataset
