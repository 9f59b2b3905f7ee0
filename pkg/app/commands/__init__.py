"""
CLI commands for the application.
"""

from app.commands.router import CommandRouter
from app.commands import steady, modes, scaling, evolution, verify

cli_router = CommandRouter()

# Include routers
cli_router.include_router(steady.router)  # steady, gaseous
cli_router.include_router(modes.router)  # modes, rayleigh
cli_router.include_router(scaling.router)  # scaling
cli_router.include_router(evolution.router)  # evolve, linear, escape
cli_router.include_router(verify.router)  # verify

__all__ = ["cli_router", "steady", "modes", "scaling", "evolution", "verify"]
