"""The three trainable networks and the gradient-reversal node.

A small convolutional feature extractor maps grayscale rasters to a
fixed-width feature vector, a classifier turns features into class
probabilities, and a two-hidden-layer discriminator scores which domain
a feature vector came from. Gradient reversal is the tape trick that
lets one backward pass drive the adversarial min-max: identity forward,
negated gradient backward.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .rng import SeededRng


def gradient_reversal(x: Tensor) -> Tensor:
    """Identity forward; multiplies the incoming gradient by -1 on backward."""
    return ag._node(x.data, (x,), lambda g: (-g,), "gradient_reversal")


def gradient_scale(x: Tensor, factor: float) -> Tensor:
    """Identity forward; scales the incoming gradient by a constant factor.

    Composed with gradient_reversal it lets a training loop ramp the
    adversarial push without touching forward values or the reversal
    contract itself.
    """
    factor = float(factor)
    return ag._node(x.data, (x,), lambda g: (factor * g,), "gradient_scale")


def _kaiming(rng: SeededRng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _as_image_tensor(images) -> Tensor:
    t = images if isinstance(images, Tensor) else ag.tensor(images)
    if t.data.ndim == 3:
        b, h, w = t.shape
        t = t.reshape((b, 1, h, w))
    if t.data.ndim != 4:
        raise ag.ShapeError(f"expected (B, H, W) or (B, 1, H, W) images, got {t.shape}")
    return t


class FeatureExtractor:
    """Two conv+relu+maxpool blocks followed by an affine+relu projection."""

    def __init__(self, height: int, width: int, rng: SeededRng,
                 channels: tuple[int, int] = (6, 12), feature_dim: int = 64):
        if height % 4 or width % 4:
            raise ag.ShapeError(f"image size {height}x{width} must be divisible by 4")
        c1, c2 = channels
        self.height, self.width = height, width
        self.feature_dim = feature_dim
        flat = c2 * (height // 4) * (width // 4)
        self._params = OrderedDict([
            ("conv1.w", ag.param(_kaiming(rng, (c1, 1, 3, 3), 9))),
            ("conv1.b", ag.param(np.zeros(c1))),
            ("conv2.w", ag.param(_kaiming(rng, (c2, c1, 3, 3), 9 * c1))),
            ("conv2.b", ag.param(np.zeros(c2))),
            ("fc.w", ag.param(_kaiming(rng, (flat, feature_dim), flat))),
            ("fc.b", ag.param(np.zeros(feature_dim))),
        ])

    def params(self) -> "OrderedDict[str, Tensor]":
        return self._params

    def forward(self, images) -> Tensor:
        x = _as_image_tensor(images)
        if x.shape[2] != self.height or x.shape[3] != self.width:
            raise ag.ShapeError(
                f"feature extractor built for {self.height}x{self.width}, got {x.shape[2]}x{x.shape[3]}")
        p = self._params
        h = ag.relu(ag.add(ag.conv2d(x, p["conv1.w"], padding=1),
                           p["conv1.b"].reshape((1, -1, 1, 1))))
        h = ag.max_pool2d(h, 2)
        h = ag.relu(ag.add(ag.conv2d(h, p["conv2.w"], padding=1),
                           p["conv2.b"].reshape((1, -1, 1, 1))))
        h = ag.max_pool2d(h, 2)
        h = h.reshape((h.shape[0], p["fc.w"].shape[0]))
        return ag.relu(ag.add(ag.matmul(h, p["fc.w"]), p["fc.b"].reshape((1, -1))))


class Classifier:
    """Affine map from features to class logits (optional hidden layer)."""

    def __init__(self, feature_dim: int, classes: int, rng: SeededRng, hidden: int = 0):
        self.classes = classes
        self.hidden = hidden
        if hidden:
            self._params = OrderedDict([
                ("fc1.w", ag.param(_kaiming(rng, (feature_dim, hidden), feature_dim))),
                ("fc1.b", ag.param(np.zeros(hidden))),
                ("fc2.w", ag.param(_kaiming(rng, (hidden, classes), hidden))),
                ("fc2.b", ag.param(np.zeros(classes))),
            ])
        else:
            self._params = OrderedDict([
                ("fc.w", ag.param(_kaiming(rng, (feature_dim, classes), feature_dim))),
                ("fc.b", ag.param(np.zeros(classes))),
            ])

    def params(self) -> "OrderedDict[str, Tensor]":
        return self._params

    def logits(self, features: Tensor) -> Tensor:
        p = self._params
        if self.hidden:
            h = ag.relu(ag.add(ag.matmul(features, p["fc1.w"]), p["fc1.b"].reshape((1, -1))))
            return ag.add(ag.matmul(h, p["fc2.w"]), p["fc2.b"].reshape((1, -1)))
        return ag.add(ag.matmul(features, p["fc.w"]), p["fc.b"].reshape((1, -1)))

    def probabilities(self, features: Tensor) -> Tensor:
        """Row-stochastic class predictions."""
        return ag.softmax_rows(self.logits(features))


class Discriminator:
    """feature_dim -> hidden -> hidden -> 1 perceptron with sigmoid output."""

    def __init__(self, feature_dim: int, rng: SeededRng, hidden: int = 64):
        self._params = OrderedDict([
            ("fc1.w", ag.param(_kaiming(rng, (feature_dim, hidden), feature_dim))),
            ("fc1.b", ag.param(np.zeros(hidden))),
            ("fc2.w", ag.param(_kaiming(rng, (hidden, hidden), hidden))),
            ("fc2.b", ag.param(np.zeros(hidden))),
            ("fc3.w", ag.param(_kaiming(rng, (hidden, 1), hidden))),
            ("fc3.b", ag.param(np.zeros(1))),
        ])

    def params(self) -> "OrderedDict[str, Tensor]":
        return self._params

    def logits(self, features: Tensor, reverse: bool = False) -> Tensor:
        """Pre-sigmoid domain scores, shape (B,). With `reverse`, a
        gradient-reversal node is inserted before the first layer so one
        backward pass updates the extractor and the discriminator in
        opposite directions."""
        x = gradient_reversal(features) if reverse else features
        p = self._params
        h = ag.relu(ag.add(ag.matmul(x, p["fc1.w"]), p["fc1.b"].reshape((1, -1))))
        h = ag.relu(ag.add(ag.matmul(h, p["fc2.w"]), p["fc2.b"].reshape((1, -1))))
        out = ag.add(ag.matmul(h, p["fc3.w"]), p["fc3.b"].reshape((1, -1)))
        return out.reshape((out.shape[0],))

    def scores(self, features: Tensor, reverse: bool = False) -> Tensor:
        """Probabilities in (0, 1) that each feature row is source-domain."""
        return ag.sigmoid(self.logits(features, reverse=reverse))


def extract(extractor: FeatureExtractor, images) -> Tensor:
    return extractor.forward(images)


def classify(classifier: Classifier, features: Tensor) -> Tensor:
    return classifier.probabilities(features)


def discriminate(discriminator: Discriminator, features: Tensor, reverse: bool = False) -> Tensor:
    return discriminator.scores(features, reverse=reverse)
