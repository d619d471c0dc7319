"""Logistic-regression risk scoring over observation features.

The feature vector is [spo2_norm, hr_norm, is_resting, is_walking,
is_running, is_falling]: vitals centered on typical values so gradient
descent is well conditioned, activity one-hot encoded. Training is
plain full-batch gradient descent on L2-regularized cross-entropy,
written out explicitly so the analytic gradient can be checked against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDataset, InvalidConfig, NonBinaryLabel

N_FEATURES = 6
SPO2_CENTER, SPO2_SCALE = 95.0, 10.0
HR_CENTER, HR_SCALE = 70.0, 30.0


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def observation_features(obs: dict) -> np.ndarray:
    """Feature vector for one observation payload. Absent vitals impute
    to the centered zero (the quality flag travels separately)."""
    x = np.zeros(N_FEATURES)
    if obs.get("spo2") is not None:
        x[0] = (obs["spo2"] - SPO2_CENTER) / SPO2_SCALE
    if obs.get("hr") is not None:
        x[1] = (obs["hr"] - HR_CENTER) / HR_SCALE
    activity = obs.get("activity")
    if activity in (1, 2, 3, 4):
        x[1 + activity] = 1.0
    return x


@dataclass
class RiskModel:
    """Weights over the six features, a bias, and the alert threshold."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    bias: float = 0.0
    tau: float = 0.5

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (N_FEATURES,):
            raise InvalidConfig(f"weights must have shape ({N_FEATURES},)")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise InvalidConfig("weights and bias must be finite")
        if not 0.0 < self.tau < 1.0:
            raise InvalidConfig(f"tau must be in (0, 1), got {self.tau}")

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return sigmoid(X @ self.weights + self.bias)

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "tau": self.tau}

    @classmethod
    def from_json(cls, data: dict) -> "RiskModel":
        return cls(weights=np.asarray(data["weights"], dtype=float),
                   bias=float(data["bias"]), tau=float(data.get("tau", 0.5)))


def default_screening_model() -> RiskModel:
    """Hand-set weights giving a conservative desk-scale default: low
    SpO2 and elevated HR push risk up, a fall adds a large bump. The
    hard safety rules fire first regardless, so this only surfaces
    compound abnormality."""
    return RiskModel(weights=np.array([-1.2, 0.6, 0.0, 0.0, 0.1, 1.5]),
                     bias=-2.5, tau=0.9)


def risk_score(model: RiskModel, obs: dict) -> float:
    """p = sigmoid(w.x + b) for one observation payload."""
    return float(model.predict_proba(observation_features(obs))[0])


def loss_and_gradient(weights: np.ndarray, bias: float, X: np.ndarray,
                      y: np.ndarray, l2: float = 0.0):
    """Mean cross-entropy with L2 on the weights, plus its gradient.

    The loss uses logaddexp(0, z) - y*z, which is the exact cross-entropy
    without clipping, so central finite differences reproduce the
    analytic gradient to machine precision.
    """
    z = X @ weights + bias
    p = sigmoid(z)
    m = len(y)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + l2 * weights @ weights)
    grad_w = X.T @ (p - y) / m + 2.0 * l2 * weights
    grad_b = float(np.mean(p - y))
    return loss, grad_w, grad_b


def train_model(X: np.ndarray, y: np.ndarray, lr: float = 0.1,
                epochs: int = 500, l2: float = 0.0,
                tau: float = 0.5) -> tuple[RiskModel, list[float]]:
    """Fit weights by full-batch gradient descent from zero init.

    Deterministic given the dataset order and hyperparameters. Returns
    the fitted model and the per-epoch loss history (epochs + 1 entries,
    including the final loss).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("need a non-empty 2-D feature matrix")
    if len(X) != len(y):
        raise InvalidConfig(f"{len(X)} rows of features but {len(y)} labels")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise NonBinaryLabel("labels must be 0 or 1")
    weights = np.zeros(X.shape[1])
    bias = 0.0
    losses = []
    for _ in range(epochs):
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, X, y, l2)
        losses.append(loss)
        weights = weights - lr * grad_w
        bias = bias - lr * grad_b
    losses.append(loss_and_gradient(weights, bias, X, y, l2)[0])
    model = RiskModel(weights=weights, bias=bias, tau=tau)
    return model, losses
