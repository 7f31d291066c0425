"""Permutation-invariant global features for point clouds.

A shared per-point MLP (3 -> 64 -> 128 -> F) followed by a channel-wise max
over points. This stands in for a pretrained PointNet: it is differentiable
with respect to point coordinates and exactly invariant to point order.
"""

import logging

import numpy as np

from .neural import MLP, DenseLayer, RmspropState, rmsprop_step

log = logging.getLogger(__name__)


class PretrainError(RuntimeError):
    pass


def _canonical_perm(points):
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0]))


class FeatureExtractor:
    def __init__(self, feature_dim=128, hidden=(64, 128), rng=None, mlp=None):
        if mlp is None:
            rng = np.random.default_rng(0) if rng is None else rng
            sizes = [3, *hidden, feature_dim]
            acts = ["relu"] * len(hidden) + ["identity"]
            mlp = MLP.build(sizes, acts, rng)
        if mlp.in_dim != 3:
            raise ValueError("per-point network must take 3D points")
        self.mlp = mlp

    @property
    def feature_dim(self):
        return self.mlp.out_dim

    @property
    def frozen(self):
        return self.mlp.frozen

    def freeze(self):
        self.mlp.freeze()
        return self

    def extract(self, points):
        return self.extract_with_grad(points)[0]

    def extract_with_grad(self, points):
        """Feature vector and a closure mapping ``dL/dfeature`` to ``(dL/dpoints, param grads)``.

        Points are evaluated in a canonical (lexicographic) order so the result
        is bit-identical under any input permutation. Among tied maxima the
        first point in that order receives the gradient.
        """
        pts = np.asarray(getattr(points, "points", points), dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("cannot extract features from an empty cloud")
        perm = _canonical_perm(pts)
        h, cache = self.mlp.forward(pts[perm])
        arg = h.argmax(axis=0)
        cols = np.arange(h.shape[1])
        feature = h[arg, cols]

        def backward(grad_feature):
            grad_h = np.zeros_like(h)
            grad_h[arg, cols] = grad_feature
            param_grads, grad_sorted = self.mlp.backward(cache, grad_h)
            grad_pts = np.empty_like(grad_sorted)
            grad_pts[perm] = grad_sorted
            return grad_pts, param_grads

        return feature, backward


def pretrain(extractor, clouds, labels, rng, learning_rate=1e-3, max_epochs=200,
             target_accuracy=0.9, min_accuracy=0.6, batch=16):
    """Train the extractor with a temporary linear head, then freeze it.

    Stops once training accuracy reaches ``target_accuracy``. Raises
    :class:`PretrainError` if fewer than two classes are given or accuracy
    stays below ``min_accuracy``. Returns the final training accuracy.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise PretrainError("pretraining needs at least two classes")
    y = np.searchsorted(classes, labels)
    head = MLP([DenseLayer.init(extractor.feature_dim, len(classes), "identity", rng)])
    feat_state = RmspropState(learning_rate)
    head_state = RmspropState(learning_rate)
    acc = 0.0
    for epoch in range(max_epochs):
        order = rng.permutation(len(clouds))
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            feat_grads = None
            head_grads = None
            for i in idx:
                f, back = extractor.extract_with_grad(clouds[i])
                logits, hcache = head.forward(f)
                p = np.exp(logits - logits.max())
                p /= p.sum()
                p[y[i]] -= 1.0
                hg, gf = head.backward(hcache, p / len(idx))
                _, fg = back(gf)
                feat_grads = fg if feat_grads is None else [a + b for a, b in zip(feat_grads, fg)]
                head_grads = hg if head_grads is None else [a + b for a, b in zip(head_grads, hg)]
            rmsprop_step(feat_state, extractor.mlp.params(), feat_grads, extractor.mlp)
            rmsprop_step(head_state, head.params(), head_grads, head)
        preds = np.array([head(extractor.extract(c)).argmax() for c in clouds])
        acc = float((preds == y).mean())
        log.info("pretrain epoch %d: accuracy %.3f", epoch, acc)
        if acc >= target_accuracy:
            break
    if acc < min_accuracy:
        raise PretrainError(f"feature pretraining reached only {acc:.2f} accuracy")
    if acc < target_accuracy:
        log.warning("feature pretraining stopped at %.2f accuracy", acc)
    extractor.freeze()
    return acc
