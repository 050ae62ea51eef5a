# retypelab/models/__init__.py
from .run import Run
from .run_log import RunLog

__all__ = ["Run", "RunLog"]
