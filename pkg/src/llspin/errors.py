"""Exception hierarchy shared by the library and the command-line tool."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class PhysicsError(ValueError):
    """Parameters outside the physical domain of an operation (e.g. no singlet-triplet mixing)."""


class SimulationError(RuntimeError):
    """A simulation could not be completed, e.g. an integrator failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ProgramError(ValueError):
    """Malformed pulse program; carries the 1-based line/column or event index when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None, index: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if index is not None:
            where.append(f"event {index}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line, self.column, self.index = line, column, index
