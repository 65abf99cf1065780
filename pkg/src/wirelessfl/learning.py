"""Strongly convex learning problem: data handling, regularized softmax
regression, projection onto the feasible ball, and centralized oracles.

The global objective is the uniform average of per-device objectives
f_m(w) = (1/|D_m|) sum_xi phi(w, xi), with

    phi(w, (x, l)) = (mu/2) ||w||^2 - ln softmax_l(x' W)

over a stacked parameter w of C class blocks. All gradients are flat
d-vectors with d = C * dim_x; features are expected to carry a trailing
bias coordinate when one is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateData, EmptyBatch, InvalidWeights,
                     NoConvergence)


@dataclass
class Dataset:
    """Labeled feature vectors with a fixed class count.

    features: (n, dim_x) float array, labels: (n,) int array in [0, C).
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError("features must be a nonempty (n, dim_x) array")
        if self.labels.shape != (len(self.features),):
            raise ValueError("labels must be one per sample")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels out of range")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")

    @property
    def n_samples(self) -> int:
        return len(self.features)

    @property
    def dim_x(self) -> int:
        return self.features.shape[1]

    @property
    def dim_model(self) -> int:
        return self.n_classes * self.dim_x


@dataclass
class Partition:
    """Assignment of sample indices to devices: disjoint, covering."""

    assignment: list[np.ndarray]

    def __post_init__(self):
        self.assignment = [np.asarray(idx, dtype=int) for idx in self.assignment]

    def validate(self, n_samples: int) -> None:
        if any(len(idx) == 0 for idx in self.assignment):
            raise ValueError("every device needs at least one sample")
        joined = np.concatenate(self.assignment)
        if len(np.unique(joined)) != len(joined):
            raise ValueError("partition overlaps")
        if len(joined) != n_samples or joined.min() < 0 or joined.max() >= n_samples:
            raise ValueError("partition must cover the dataset exactly")

    @property
    def n_devices(self) -> int:
        return len(self.assignment)


def project_ball(w: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the origin-centered ball of given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    norm = float(np.linalg.norm(w))
    if norm <= radius:
        return w
    return w * (radius / norm)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxObjective:
    """Per-device regularized cross-entropy objectives over a partition."""

    def __init__(self, dataset: Dataset, partition: Partition, mu: float):
        if mu <= 0:
            raise ValueError("mu must be positive")
        partition.validate(dataset.n_samples)
        self.dataset = dataset
        self.partition = partition
        self.mu = float(mu)
        self.n_devices = partition.n_devices
        self.dim = dataset.dim_model
        self._device_x = [dataset.features[idx] for idx in partition.assignment]
        self._device_y = [dataset.labels[idx] for idx in partition.assignment]

    # -- sample-level -------------------------------------------------------

    def sample_loss(self, w: np.ndarray, x: np.ndarray, label: int) -> float:
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        scores = wmat @ x
        scores -= scores.max()
        logz = np.log(np.exp(scores).sum())
        return 0.5 * self.mu * float(w @ w) - float(scores[label] - logz)

    def sample_grad(self, w: np.ndarray, x: np.ndarray, label: int) -> np.ndarray:
        """Gradient of phi(w, (x, label)); block c is (softmax_c - 1{c=l}) x + mu w_c."""
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        probs = _softmax(wmat @ x)
        probs[label] -= 1.0
        return (np.outer(probs, x) + self.mu * wmat).ravel()

    # -- device-level -------------------------------------------------------

    def batch_grad(self, device: int, w: np.ndarray, batch: np.ndarray) -> np.ndarray:
        """Mean sample gradient over `batch` (indices into the device's set)."""
        batch = np.asarray(batch, dtype=int)
        if batch.size == 0:
            raise EmptyBatch(f"device {device}: empty mini-batch")
        x = self._device_x[device][batch]
        y = self._device_y[device][batch]
        return self._grad_on(w, x, y)

    def local_grad(self, device: int, w: np.ndarray) -> np.ndarray:
        return self._grad_on(w, self._device_x[device], self._device_y[device])

    def local_value(self, device: int, w: np.ndarray) -> float:
        return self._value_on(w, self._device_x[device], self._device_y[device])

    def local_set_size(self, device: int) -> int:
        return len(self._device_x[device])

    def draw_batch(self, device: int, batch_size: int,
                   rng: np.random.Generator) -> np.ndarray:
        n = self.local_set_size(device)
        if batch_size >= n:
            return np.arange(n)
        return rng.choice(n, size=batch_size, replace=False)

    def _grad_on(self, w, x, y) -> np.ndarray:
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        probs = _softmax(x @ wmat.T)            # (b, C)
        probs[np.arange(len(y)), y] -= 1.0
        return (probs.T @ x / len(y) + self.mu * wmat).ravel()

    def _value_on(self, w, x, y) -> float:
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        scores = x @ wmat.T
        scores -= scores.max(axis=1, keepdims=True)
        logz = np.log(np.exp(scores).sum(axis=1))
        ce = float(np.mean(logz - scores[np.arange(len(y)), y]))
        return 0.5 * self.mu * float(w @ w) + ce

    # -- aggregate ----------------------------------------------------------

    def weighted_grad(self, weights: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Gradient of sum_m weights_m f_m(w), in one pass over all samples."""
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        grad = np.zeros_like(wmat)
        for m in range(self.n_devices):
            if weights[m] == 0.0:
                continue
            x, y = self._device_x[m], self._device_y[m]
            probs = _softmax(x @ wmat.T)
            probs[np.arange(len(y)), y] -= 1.0
            grad += (weights[m] / len(y)) * (probs.T @ x)
        return (grad + self.mu * wmat * float(np.sum(weights))).ravel()

    def weighted_value(self, weights: np.ndarray, w: np.ndarray) -> float:
        return float(sum(weights[m] * self.local_value(m, w)
                         for m in range(self.n_devices) if weights[m] != 0.0))

    def accuracy(self, w: np.ndarray) -> float:
        wmat = w.reshape(self.dataset.n_classes, self.dataset.dim_x)
        pred = np.argmax(self.dataset.features @ wmat.T, axis=1)
        return float(np.mean(pred == self.dataset.labels))

    def smoothness_bound(self) -> float:
        """L estimate: mu + max_m lambda_max(X_m' X_m / |D_m|) / 4."""
        top = 0.0
        for x in self._device_x:
            gram = x.T @ x / len(x)
            top = max(top, float(np.linalg.eigvalsh(gram)[-1]))
        return self.mu + top / 4.0


class QuadraticObjectives:
    """Synthetic devices with f_m(w) = 1/2 (w - c_m)' diag(curv) (w - c_m).

    Closed forms for minimizers make this the oracle counterpart of the
    softmax problem in tests and bound verification.
    """

    def __init__(self, centers: np.ndarray, curvatures: np.ndarray | None = None):
        self.centers = np.asarray(centers, dtype=float)
        if self.centers.ndim != 2:
            raise ValueError("centers must be (N, d)")
        self.n_devices, self.dim = self.centers.shape
        if curvatures is None:
            curvatures = np.ones(self.dim)
        self.curvatures = np.asarray(curvatures, dtype=float)
        if self.curvatures.shape != (self.dim,) or (self.curvatures <= 0).any():
            raise ValueError("curvatures must be positive, one per coordinate")
        self.mu = float(self.curvatures.min())

    def local_value(self, device: int, w: np.ndarray) -> float:
        diff = w - self.centers[device]
        return 0.5 * float(diff @ (self.curvatures * diff))

    def local_grad(self, device: int, w: np.ndarray) -> np.ndarray:
        return self.curvatures * (w - self.centers[device])

    def batch_grad(self, device: int, w: np.ndarray, batch=None) -> np.ndarray:
        return self.local_grad(device, w)

    def local_set_size(self, device: int) -> int:
        return 1

    def draw_batch(self, device, batch_size, rng):
        return np.arange(1)

    def weighted_grad(self, weights: np.ndarray, w: np.ndarray) -> np.ndarray:
        center = weights @ self.centers
        return self.curvatures * (float(np.sum(weights)) * w - center)

    def weighted_value(self, weights: np.ndarray, w: np.ndarray) -> float:
        return float(sum(weights[m] * self.local_value(m, w)
                         for m in range(self.n_devices)))

    def smoothness_bound(self) -> float:
        return float(self.curvatures.max())

    def minimizer(self, weights: np.ndarray) -> np.ndarray:
        return (weights @ self.centers) / float(np.sum(weights))


def compute_feasible_radius(objectives, mu: float | None = None) -> float:
    """Radius of the feasible ball: max_m ||grad f_m(0)|| / mu."""
    mu = objectives.mu if mu is None else mu
    zero = np.zeros(objectives.dim)
    top = max(float(np.linalg.norm(objectives.local_grad(m, zero)))
              for m in range(objectives.n_devices))
    if top == 0.0:
        raise DegenerateData("all local gradients vanish at w = 0; "
                             "feasible-ball radius collapses")
    return top / mu


def solve_centralized(objectives, weights: np.ndarray, tol: float,
                      max_iters: int = 1_000_000) -> np.ndarray:
    """Minimize sum_m weights_m f_m by full-batch GD with step 2/(mu + L).

    Stops when the gradient norm drops below `tol`; this is the oracle for
    w*, the biased minimizer, and every gap metric, so `tol` should sit far
    below any measured quantity.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (objectives.n_devices,):
        raise InvalidWeights("need one weight per device")
    if (weights < 0).any() or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise InvalidWeights("weights must lie on the probability simplex")
    if tol <= 0:
        raise ValueError("tol must be positive")

    step = 2.0 / (objectives.mu + objectives.smoothness_bound())
    w = np.zeros(objectives.dim)
    for _ in range(max_iters):
        grad = objectives.weighted_grad(weights, w)
        if float(np.linalg.norm(grad)) <= tol:
            return w
        w = w - step * grad
    raise NoConvergence(f"centralized oracle: no convergence in {max_iters} "
                        f"iterations (tol={tol})")


def compute_kappa(objectives, w_star: np.ndarray) -> float:
    """Data-divergence: sqrt of the mean squared local gradient norm at w*."""
    total = sum(float(np.linalg.norm(objectives.local_grad(m, w_star)) ** 2)
                for m in range(objectives.n_devices))
    return float(np.sqrt(total / objectives.n_devices))


@dataclass
class GradOracleStats:
    """Configured gradient bounds used by the transmission schemes."""

    g_max: float
    sigmas: np.ndarray
    kappa: float = 0.0

    def __post_init__(self):
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.g_max <= 0:
            raise ValueError("g_max must be positive")
        if (self.sigmas < 0).any():
            raise ValueError("sigma bounds must be non-negative")


def audit_gradient_bound(objectives, radius: float, g_max: float,
                         rng: np.random.Generator, n_probes: int = 10_000) -> float:
    """Empirical check of the sample-gradient bound over the feasible ball.

    Sweeps random (w in W, sample) pairs; returns the largest observed
    norm and raises if it exceeds `g_max` (a setup error, not a clamp).
    """
    top = 0.0
    dataset = objectives.dataset
    dim = objectives.dim
    for _ in range(n_probes):
        w = rng.standard_normal(dim)
        w *= rng.uniform(0.0, radius) / np.linalg.norm(w)
        i = int(rng.integers(dataset.n_samples))
        g = objectives.sample_grad(w, dataset.features[i], int(dataset.labels[i]))
        top = max(top, float(np.linalg.norm(g)))
    if top > g_max:
        raise DegenerateData(
            f"configured gradient bound {g_max} violated: observed {top:.6g}")
    return top


@dataclass
class LearningConfig:
    """Step size and curvature constants for the projected-SGD updates."""

    mu: float
    eta: float
    smoothness: float
    radius: float = field(default=0.0)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if not (0.0 < self.eta <= 2.0 / (self.mu + self.smoothness) + 1e-12):
            raise ValueError("eta must be in (0, 2/(mu+L)]")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius
