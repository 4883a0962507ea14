"""Shared test utilities."""

import numpy as np

from edgehedge.config import default_config, parse_config


def make_config(**sections):
    """Default run config with selected sections updated (dict) or replaced (scalar)."""
    data = default_config().model_dump()
    for key, value in sections.items():
        if isinstance(value, dict):
            data[key].update(value)
        else:
            data[key] = value
    return parse_config(data)


def finite_difference_check(model, x, t, h=1e-5):
    """Max relative error between backprop and central differences over all parameters."""
    _, cg, ig = model.loss_gradient(x, t)
    worst = 0.0
    for params, grads in ((model.coefs_, cg), (model.intercepts_, ig)):
        for p, g in zip(params, grads):
            for i in np.ndindex(p.shape):
                orig = p[i]
                p[i] = orig + h
                up = model.loss_gradient(x, t)[0]
                p[i] = orig - h
                down = model.loss_gradient(x, t)[0]
                p[i] = orig
                num = (up - down) / (2 * h)
                denom = max(abs(num), abs(g[i]))
                if denom > 0:
                    worst = max(worst, abs(num - g[i]) / denom)
    return worst
