"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to build the
machine-parsable ``error[<category>]:`` prefix and to pick the exit code.
"""


class EdgeHedgeError(Exception):
    category = "runtime"
    exit_code = 1


class ConfigError(EdgeHedgeError, ValueError):
    category = "config"
    exit_code = 2


class StateError(EdgeHedgeError, ValueError):
    category = "state"


class LoadError(EdgeHedgeError, ValueError):
    """A server was asked to host more parallel instances than it supports."""

    category = "load"


class ModelError(EdgeHedgeError, ValueError):
    category = "model"


class TrainingError(EdgeHedgeError, RuntimeError):
    category = "training"


class ProfilingError(EdgeHedgeError, ValueError):
    category = "profiling"


class ReportError(EdgeHedgeError, ValueError):
    category = "report"
