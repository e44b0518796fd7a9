"""Exception hierarchy shared by the solver modules."""


class MortarSDGError(Exception):
    """Base class for all library errors."""


class PartitionError(MortarSDGError):
    """Subdomain rectangles overlap, leave gaps, or meet non-conformingly."""


class GeometryError(MortarSDGError):
    """Degenerate element or inconsistent interface geometry."""


class MeshConsistencyError(MortarSDGError):
    """Mesh data that must agree across structures does not."""


class AssemblyError(MortarSDGError):
    """Block dimensions do not match the degree-of-freedom bookkeeping."""


class SolverError(MortarSDGError):
    """The saddle-point system is singular or the solve is inaccurate."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class ConfigError(MortarSDGError):
    """Invalid run configuration; ``key_path`` names the offending entry."""

    def __init__(self, message, key_path=""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class AdaptiveRunError(MortarSDGError):
    """A level of the adaptive loop failed; carries the partial history."""

    def __init__(self, message, level, history):
        super().__init__(f"level {level}: {message}")
        self.level = level
        self.history = history
