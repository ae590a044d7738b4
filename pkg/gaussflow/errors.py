class DimensionError(ValueError):
    pass


class DegeneratePlane(ValueError):
    pass


class DomainError(ValueError):
    pass


class CapError(ValueError):
    pass


class StencilError(IndexError):
    pass


class BlowupError(FloatingPointError):

    def __init__(self, message, node=None, step=None):
        super().__init__(message)
        self.node = node
        self.step = step


class HypothesisViolated(RuntimeError):

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class NotASoliton(RuntimeError):

    def __init__(self, message, max_residual=None, threshold=None):
        super().__init__(message)
        self.max_residual = max_residual
        self.threshold = threshold


class ParseError(ValueError):

    def __init__(self, message, position=None, lineno=None, colno=None):
        super().__init__(message)
        self.position = position
        self.lineno = lineno
        self.colno = colno


class ValidationError(ValueError):

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__('; '.join(self.violations))
