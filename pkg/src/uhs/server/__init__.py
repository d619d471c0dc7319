from .auth import ROLE_DOCTOR, ROLE_PATIENT, AuthManager
from .core import ALERT_CAUSES, HealthServer, ServerConfig
from .embedded import InProcessClient
from .http_api import make_http_server, serve_in_thread
from .risk import (
    RiskModel,
    default_screening_model,
    loss_and_gradient,
    observation_features,
    risk_score,
    sigmoid,
    train_model,
)

__all__ = [
    "ALERT_CAUSES",
    "AuthManager",
    "HealthServer",
    "InProcessClient",
    "ROLE_DOCTOR",
    "ROLE_PATIENT",
    "RiskModel",
    "ServerConfig",
    "default_screening_model",
    "loss_and_gradient",
    "make_http_server",
    "observation_features",
    "risk_score",
    "serve_in_thread",
    "sigmoid",
    "train_model",
]
