from typing import Optional, Sequence, Tuple


class LabError(Exception):
    pass


class GeometryError(LabError, ValueError):
    pass


class ConvergenceError(LabError):
    def __init__(self, message: str, achieved: float = float("nan"), iterations: int = 0) -> None:
        super().__init__(message)
        self.achieved = achieved
        self.iterations = iterations


class CensoringError(LabError):
    def __init__(self, censored: int, n_paths: int) -> None:
        super().__init__(
            f"{censored} of {n_paths} paths censored ({100.0 * censored / max(n_paths, 1):.2f}%), above the 1% limit"
        )
        self.censored = censored
        self.n_paths = n_paths


class DisconnectedDomainError(LabError):
    pass


class InsufficientRangeError(LabError):
    pass


class ConfigError(LabError):
    """All problems found in a scenario configuration, not just the first one."""

    def __init__(self, errors: Sequence[Tuple[str, str]], line: Optional[int] = None, column: Optional[int] = None):
        self.errors = list(errors)
        self.line = line
        self.column = column
        super().__init__("; ".join(f"{path}: {msg}" if path else msg for path, msg in self.errors))


class ScenarioError(LabError):
    def __init__(self, claim: str, cause: Exception) -> None:
        super().__init__(f"[{claim}] {type(cause).__name__}: {cause}")
        self.claim = claim
        self.cause = cause
