"""HTTP service wrapping the cost model: pydantic request/response schemas
and a FastAPI app factory."""

from .app import app, create_app

__all__ = ["app", "create_app"]
