"""Exception hierarchy. Each class carries a short machine-readable prefix."""


class ScganError(Exception):
    prefix = "error"


class ConfigError(ScganError, ValueError):
    prefix = "config-error"


class UsageError(ScganError, ValueError):
    prefix = "usage-error"


class TrainingError(ScganError, RuntimeError):
    prefix = "training-error"


class CheckpointError(ScganError, IOError):
    prefix = "checkpoint-error"


class ParseError(ScganError, ValueError):
    prefix = "parse-error"


class NumericError(ScganError, ArithmeticError):
    prefix = "numeric-error"


class PrerequisiteError(ScganError):
    prefix = "prerequisite-error"


class StaleArtifactError(ScganError):
    prefix = "stale-artifact"
