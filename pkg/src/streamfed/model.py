"""Parameter domain, loss functions, gradients, and projections.

The model is linear: a parameter vector ``theta`` of length ``d`` scores a
feature vector by inner product. Three loss kinds are provided:

* ``logistic``: binary cross-entropy on labels in {0, 1};
* ``squared``: 0.5 * (score - label)^2 on real labels;
* ``two_point``: the fixed two-dimensional adversarial pair used by the
  lower-bound construction, with samples labelled 1 or 2.

Losses carry their uniform bound ``bound_B`` over the domain and their
smoothness constant ``smoothness_L``; ``grad_bound_G = sqrt(2*L*B)`` and
``noise_scale_bound = 2*G`` are derived accessors used by the bound
coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "DomainSpec",
    "LossSpec",
    "Example",
    "l2_ball",
    "two_point_box",
    "logistic_loss_spec",
    "squared_loss_spec",
    "two_point_loss_spec",
    "project",
    "in_domain",
    "loss_value",
    "loss_grad",
    "batch_losses",
    "weighted_grad",
    "two_point_erm_minimizer",
    "two_point_erm_value",
]


@dataclass(frozen=True)
class DomainSpec:
    """Bounded convex parameter domain.

    kind "l2_ball": Euclidean ball given by ``center`` and ``radius``.
    kind "box": the coordinate box [-1, 1]^d (adversarial instance only).
    ``diameter`` is the Euclidean diameter, the D entering the bound
    coefficients.
    """

    kind: str
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        if self.kind not in ("l2_ball", "box"):
            raise ValueError(f"unknown domain kind: {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not np.all(np.isfinite(self.center)):
            raise ValueError("center must be finite")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        if self.kind == "l2_ball":
            return 2.0 * self.radius
        return 2.0 * self.radius * math.sqrt(self.dim)


def l2_ball(dim: int, radius: float = 1.0) -> DomainSpec:
    """Centered Euclidean ball, the default domain."""
    return DomainSpec(kind="l2_ball", center=np.zeros(dim), radius=float(radius))


def two_point_box() -> DomainSpec:
    """The box [-1, 1]^2 of the adversarial two-point instance."""
    return DomainSpec(kind="box", center=np.zeros(2), radius=1.0)


@dataclass(frozen=True)
class LossSpec:
    """A loss kind together with its bound and smoothness constants.

    ``bound_B`` is an upper bound of the loss over domain x sample space and
    ``smoothness_L`` a gradient Lipschitz constant over the domain; both are
    computed conservatively by the constructors below.
    """

    kind: str
    bound_B: float
    smoothness_L: float

    def __post_init__(self) -> None:
        if self.kind not in ("logistic", "squared", "two_point"):
            raise ValueError(f"unknown loss kind: {self.kind!r}")
        if self.bound_B < 0 or self.smoothness_L <= 0:
            raise ValueError("bound_B must be >= 0 and smoothness_L > 0")

    @property
    def grad_bound_G(self) -> float:
        """Gradient-norm bound sqrt(2 * L * B)."""
        return math.sqrt(2.0 * self.smoothness_L * self.bound_B)

    @property
    def noise_scale_bound(self) -> float:
        """Upper bound 2 * sqrt(2 * L * B) on the per-client gradient noise scale."""
        return 2.0 * self.grad_bound_G


def logistic_loss_spec(radius: float, max_feature_norm: float) -> LossSpec:
    """Logistic loss constants for an L2 ball of the given radius.

    B = log(1 + exp(radius * max_feature_norm)) bounds the loss at the worst
    score; L = max_feature_norm^2 / 4 bounds the Hessian (sigmoid' <= 1/4).
    """
    if radius <= 0 or max_feature_norm <= 0:
        raise ValueError("radius and max_feature_norm must be positive")
    b = math.log1p(math.exp(radius * max_feature_norm))
    l = max_feature_norm**2 / 4.0
    return LossSpec(kind="logistic", bound_B=b, smoothness_L=l)


def squared_loss_spec(radius: float, max_feature_norm: float, max_abs_label: float) -> LossSpec:
    """Squared loss constants from the data ranges observed at load time."""
    if radius <= 0 or max_feature_norm <= 0:
        raise ValueError("radius and max_feature_norm must be positive")
    b = 0.5 * (radius * max_feature_norm + abs(max_abs_label)) ** 2
    l = max_feature_norm**2
    return LossSpec(kind="squared", bound_B=b, smoothness_L=l)


def two_point_loss_spec() -> LossSpec:
    """The adversarial two-point pair on the box [-1, 1]^2.

    Sample 1: (t1 + 1)^2 + 0.5 * (t1 + t2 + 1)^2, maximal 8.5 at (1, 1).
    Sample 2: 0.5 * (t1 - 1)^2 + 0.5 * (t1 + t2 - 1)^2, maximal 6.5 at (-1, -1).
    The larger Hessian eigenvalue over both samples is 2 + sqrt(2).
    """
    return LossSpec(kind="two_point", bound_B=8.5, smoothness_L=2.0 + math.sqrt(2.0))


@dataclass(frozen=True)
class Example:
    """One labelled sample with its arrival metadata."""

    features: np.ndarray
    label: float
    client_id: int
    arrival_round: int
    global_index: int

    def __post_init__(self) -> None:
        if self.arrival_round < 1:
            raise ValueError("arrival_round must be >= 1")


def project(domain: DomainSpec, v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the domain. Identity on members."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    if v.shape != (domain.dim,):
        raise ValueError(f"dimension mismatch: {v.shape} vs ({domain.dim},)")
    if domain.kind == "box":
        return np.clip(v, -domain.radius, domain.radius)
    delta = v - domain.center
    norm = float(np.linalg.norm(delta))
    if norm <= domain.radius:
        return v
    return domain.center + delta * (domain.radius / norm)


def in_domain(domain: DomainSpec, theta: np.ndarray, rtol: float = 1e-9) -> bool:
    """Membership test with a small relative slack for round-off."""
    if domain.kind == "box":
        return bool(np.all(np.abs(theta) <= domain.radius * (1.0 + rtol)))
    return float(np.linalg.norm(theta - domain.center)) <= domain.radius * (1.0 + rtol)


def _check_theta(theta: np.ndarray, dim: int, domain: DomainSpec | None) -> None:
    if theta.ndim != 1 or theta.size != dim:
        raise ValueError(f"theta has shape {theta.shape}, expected ({dim},)")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta has non-finite entries")
    if domain is not None and not in_domain(domain, theta):
        raise ValueError("theta lies outside the domain; project it first")


def _two_point_value(theta: np.ndarray, z: int) -> float:
    t1, t2 = theta
    if z == 1:
        return (t1 + 1.0) ** 2 + 0.5 * (t1 + t2 + 1.0) ** 2
    if z == 2:
        return 0.5 * (t1 - 1.0) ** 2 + 0.5 * (t1 + t2 - 1.0) ** 2
    raise ValueError(f"two_point label must be 1 or 2, got {z}")


def _two_point_grad(theta: np.ndarray, z: int) -> np.ndarray:
    t1, t2 = theta
    if z == 1:
        s = t1 + t2 + 1.0
        return np.array([2.0 * (t1 + 1.0) + s, s])
    if z == 2:
        s = t1 + t2 - 1.0
        return np.array([(t1 - 1.0) + s, s])
    raise ValueError(f"two_point label must be 1 or 2, got {z}")


def loss_value(loss: LossSpec, theta: np.ndarray, z: Example, domain: DomainSpec | None = None) -> float:
    """Loss of one sample at ``theta``.

    When ``domain`` is given, membership is enforced (callers must project
    first). Dimension mismatches are hard errors.
    """
    theta = np.asarray(theta, dtype=float)
    if loss.kind == "two_point":
        _check_theta(theta, 2, domain)
        return _two_point_value(theta, int(z.label))
    x = z.features
    _check_theta(theta, x.size, domain)
    X = x[None, :]
    y = np.array([z.label], dtype=float)
    if loss.kind == "logistic":
        return float(_kernels.logistic_losses(theta, X, y)[0])
    return float(_kernels.squared_losses(theta, X, y)[0])


def loss_grad(loss: LossSpec, theta: np.ndarray, z: Example, domain: DomainSpec | None = None) -> np.ndarray:
    """Gradient of :func:`loss_value` with respect to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if loss.kind == "two_point":
        _check_theta(theta, 2, domain)
        return _two_point_grad(theta, int(z.label))
    x = z.features
    _check_theta(theta, x.size, domain)
    X = x[None, :]
    y = np.array([z.label], dtype=float)
    w = np.ones(1)
    if loss.kind == "logistic":
        return _kernels.logistic_grad_weighted(theta, X, y, w)
    return _kernels.squared_grad_weighted(theta, X, y, w)


def batch_losses(loss: LossSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vector of per-sample losses over a stacked batch."""
    if loss.kind == "logistic":
        return _kernels.logistic_losses(theta, X, y)
    if loss.kind == "squared":
        return _kernels.squared_losses(theta, X, y)
    return np.array([_two_point_value(theta, int(label)) for label in y])


def weighted_grad(loss: LossSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted gradient sum_i w_i * grad loss(theta; (X_i, y_i))."""
    if loss.kind == "logistic":
        return _kernels.logistic_grad_weighted(theta, X, y, w)
    if loss.kind == "squared":
        return _kernels.squared_grad_weighted(theta, X, y, w)
    g = np.zeros(2)
    for label, wi in zip(y, w):
        g += wi * _two_point_grad(theta, int(label))
    return g


def two_point_erm_minimizer(q: float) -> np.ndarray:
    """Exact minimizer of q * loss(.; 1) + (1 - q) * loss(.; 2) on the box.

    The first component is (1 - 3q) / (1 + q) and the second
    1 - 2q - (1 - 3q) / (1 + q); both lie in [-1, 1] for q in [0, 1].
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    t1 = (1.0 - 3.0 * q) / (1.0 + q)
    t2 = 1.0 - 2.0 * q - t1
    return np.array([t1, t2])


def two_point_erm_value(q: float, theta: np.ndarray) -> float:
    """Value of q * loss(theta; 1) + (1 - q) * loss(theta; 2)."""
    return q * _two_point_value(theta, 1) + (1.0 - q) * _two_point_value(theta, 2)
