"""Human-review service: record store, HTTP API, and warm-start retraining."""

from .store import ReviewRecord, ReviewStore, StoreError, export_verified
from .service import create_app, ModelRegistry, RetrainManager

__all__ = [
    "ReviewRecord", "ReviewStore", "StoreError", "export_verified",
    "create_app", "ModelRegistry", "RetrainManager",
]
