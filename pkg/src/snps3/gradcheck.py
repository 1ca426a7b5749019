"""Central-difference validation of analytic gradients."""
from __future__ import annotations

import numpy as np

from snps3.errors import GradCheckError


def grad_check(f, point: dict, eps: float = 1e-4, wrt=None) -> float:
    """Largest ``|analytic - numeric| / max(1, |numeric|)`` over every coordinate.

    ``f(**point)`` must return a :class:`~snps3.losses.LossResult` whose ``grads``
    are keyed like ``point``. Only array entries named in ``wrt`` (default: all
    keys present in ``grads``) are perturbed; each is copied to float64 first.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-6, 1e-2], got {eps}")
    point = {k: (np.array(v, dtype=np.float64) if isinstance(v, np.ndarray) else v) for k, v in point.items()}
    analytic = f(**point).grads
    names = list(analytic) if wrt is None else list(wrt)
    worst = 0.0
    for name in names:
        x = point[name]
        g = np.asarray(analytic[name], dtype=np.float64)
        if g.shape != x.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, input has {x.shape}")
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + eps
            up = f(**point).value
            x[idx] = orig - eps
            down = f(**point).value
            x[idx] = orig
            numeric = (up - down) / (2 * eps)
            if not (np.isfinite(up) and np.isfinite(down) and np.isfinite(g[idx])):
                raise GradCheckError(name, idx)
            worst = max(worst, abs(g[idx] - numeric) / max(1.0, abs(numeric)))
    return worst
