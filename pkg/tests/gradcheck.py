"""Central finite-difference oracle for autodiff gradients (float64)."""

import numpy as np

from fusepath import tensor as tn


def numeric_grad(loss_fn, leaf, eps=1e-4):
    g = np.zeros_like(leaf.data)
    it = np.nditer(leaf.data, flags=["multi_index"])
    with tn.no_grad():
        for _ in it:
            idx = it.multi_index
            orig = leaf.data[idx]
            leaf.data[idx] = orig + eps
            up = float(loss_fn().data)
            leaf.data[idx] = orig - eps
            down = float(loss_fn().data)
            leaf.data[idx] = orig
            g[idx] = (up - down) / (2 * eps)
    return g


def max_rel_error(analytic, numeric, atol=1e-6):
    """Largest |a - n| / max(|a|, |n|) over entries that are not both near zero."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff < atol, 0.0, diff / np.maximum(scale, 1e-300))
    return float(rel.max()) if rel.size else 0.0


def check(fn, leaves, seed=0, eps=1e-4):
    """Compare d/d(leaf) of sum(fn() * R) for a fixed random R; returns max relative error."""
    out = fn()
    r = np.random.default_rng(seed + 1000).standard_normal(out.shape)

    def loss_fn():
        return tn.sum(tn.mul(fn(), r))

    for leaf in leaves:
        leaf.requires_grad = True
        leaf.grad = None
    tn.backward(loss_fn())
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad.copy()
        worst = max(worst, max_rel_error(analytic, numeric_grad(loss_fn, leaf, eps)))
    return worst
