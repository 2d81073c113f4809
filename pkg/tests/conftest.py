import numpy as np
import pytest

from npchange.windowed_regression import PairedSeries


def direct_nw(x, y, s, u, point, h, kernel):
    """Nadaraya-Watson estimate by explicit summation over window [s, u]."""
    from npchange.windowed_regression import kernel_eval

    xs, ys = np.asarray(x[s - 1:u], float), np.asarray(y[s - 1:u], float)
    w = kernel_eval(kernel, (xs - point) / h) / h
    if not np.any(w > 0):
        return None
    return float(np.sum(w * ys) / np.sum(w))


def direct_ll(x, y, s, u, point, h, kernel):
    """Local-linear intercept by a weighted least-squares solve."""
    from npchange.windowed_regression import kernel_eval

    xs, ys = np.asarray(x[s - 1:u], float), np.asarray(y[s - 1:u], float)
    w = kernel_eval(kernel, (xs - point) / h) / h
    keep = w > 0
    if np.unique(xs[keep]).size < 2:
        return None
    sw = np.sqrt(w[keep])
    design = np.column_stack([np.ones(keep.sum()), xs[keep] - point])
    coef, *_ = np.linalg.lstsq(design * sw[:, None], ys[keep] * sw, rcond=None)
    return float(coef[0])


def brute_force_profile(x, y, grid, h, trim, kernel="epanechnikov", aggregation="ss",
                        estimator="nw"):
    """W(t) recomputed from scratch at every split, O(n^2 m)."""
    n = len(x)
    est = direct_nw if estimator == "nw" else direct_ll
    values, undefined = [], []
    for t in range(trim, n - trim + 1):
        diffs, skipped = [], 0
        for g in grid:
            left = est(x, y, 1, t, g, h, kernel) if t >= 1 else None
            right = est(x, y, t + 1, n, g, h, kernel) if t < n else None
            if left is None or right is None:
                skipped += 1
                continue
            diffs.append(abs(left - right))
        weight = t * (n - t) / n**2
        if aggregation == "ss":
            agg = sum(d * d for d in diffs)
        else:
            agg = max(diffs, default=0.0)
        values.append(weight * agg)
        undefined.append(skipped)
    return np.array(values), np.array(undefined)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_series(gen, n, change=False):
    x = gen.uniform(-2, 2, n)
    y = np.sin(x) + 0.3 * gen.standard_normal(n)
    if change:
        k = n // 2
        y[k:] += x[k:] ** 2
    return PairedSeries(x, y)
