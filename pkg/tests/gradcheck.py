"""Central finite-difference gradient checking."""

import numpy as np


def max_rel_error(loss_fn, params, step=1e-5, floor=1e-8):
    """Worst elementwise relative error between analytic and numeric gradients.

    ``loss_fn()`` must build a fresh scalar tensor from ``params`` each call.
    The denominator is max(|analytic|, |numeric|, floor) so entries whose
    true gradient is zero are compared absolutely.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else np.array(p.grad)
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss_fn().item()
            flat[i] = old - step
            down = loss_fn().item()
            flat[i] = old
            numeric.reshape(-1)[i] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
