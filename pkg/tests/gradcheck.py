"""Central finite-difference check of the analytic ArcFace gradients."""

import numpy as np

from augkit.losses_training import ArcFaceConfig, HeadParams, arcface_grad

from .oracles import arcface_loss_stack

H = 1e-5
# Finite differences at h=1e-5 carry ~1e-10 absolute rounding noise when the
# loss is O(10), so components below this floor are compared absolutely.
REL_FLOOR = 1e-5


def instance(seed):
    rng = np.random.default_rng(seed)
    d, c = int(rng.integers(4, 65)), int(rng.integers(2, 17))
    cfg = ArcFaceConfig(c, d, scale=float(rng.choice([1.0, 16.0, 32.0, 64.0])),
                        margin=float(rng.choice([0.0, 0.1, 0.2, 0.5])))
    return cfg, rng.standard_normal(d), rng.standard_normal((c, d)), int(rng.integers(c))


def numeric(cfg, e, w, y):
    d, c = e.size, w.shape[0]
    eye = np.eye(d) * H
    ge = (arcface_loss_stack(e + eye, y, w, cfg.scale, cfg.margin)
          - arcface_loss_stack(e - eye, y, w, cfg.scale, cfg.margin)) / (2 * H)
    bump = np.eye(c * d).reshape(c * d, c, d) * H
    gw = (arcface_loss_stack(e, y, w + bump, cfg.scale, cfg.margin)
          - arcface_loss_stack(e, y, w - bump, cfg.scale, cfg.margin)) / (2 * H)
    return ge, gw.reshape(c, d)


def rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)))


def check(seed):
    cfg, e, w, y = instance(seed)
    ae, aw = arcface_grad(e, y, HeadParams(w), cfg)
    ne, nw = numeric(cfg, e, w, y)
    return max(rel_error(ae, ne), rel_error(aw, nw))
