"""Service layer orchestrating experiment workflows."""

from .experiment import CommandResult, ExperimentCallbacks, ExperimentService

__all__ = ["CommandResult", "ExperimentCallbacks", "ExperimentService"]
