"""
Service layer for the numerical pipeline.
"""

from app.services import numerics, steady_state, spectral, scaling, dynamics, result_writer, verification

__all__ = ["numerics", "steady_state", "spectral", "scaling", "dynamics", "result_writer", "verification"]
