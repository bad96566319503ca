"""PyTorch instrumentation writing tracescope's run-directory format."""

from .recorder import TraceRecorder, UsageError

__version__ = "0.1.0"
