"""Exception hierarchy shared by every fibrelab module."""


class FibrelabError(Exception):
    pass


class DimensionError(FibrelabError, ValueError):
    """Operand dimensions do not line up."""


class ShapeError(FibrelabError, ValueError):
    """An object has the wrong overall shape for the requested use (e.g. non-scalar classifier output)."""


class StructureError(FibrelabError, ValueError):
    """Malformed tree, relabeling or model structure."""


class RuleDomainError(FibrelabError, KeyError):
    """A fibring rule was applied outside its domain."""

    def __init__(self, vector, path=()):
        self.vector = tuple(vector)
        self.path = tuple(path)
        super().__init__(vector, path)

    def __str__(self):
        from fibrelab.linalg import format_vector

        where = "/".join(self.path) or "<root>"
        return f"no rule entry for {format_vector(self.vector)} at edge {where}"


class UnreachableJump(FibrelabError, LookupError):
    """No stored or derivable jump between two components."""


class FormulaSyntaxError(FibrelabError, ValueError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class GuardExceeded(FibrelabError, RuntimeError):
    """Cube enumeration larger than the configured limit."""
