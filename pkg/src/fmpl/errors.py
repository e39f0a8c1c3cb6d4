"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class FMPLError(Exception):
    exit_code = 1
    kind = "error"

    def details(self) -> dict:
        return {}


class InputError(FMPLError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2
    kind = "input_error"


class NumericalError(FMPLError, ArithmeticError):
    exit_code = 3
    kind = "numerical_error"


class NotPositiveDefiniteError(NumericalError):
    """A principal submatrix failed Cholesky factorization."""

    def __init__(self, subset, node=None):
        self.subset = tuple(int(i) for i in subset)
        self.node = node
        where = f" (node {node})" if node is not None else ""
        super().__init__(f"submatrix on {list(self.subset)} is not positive definite{where}")

    def details(self) -> dict:
        return {"node": self.node, "subset": list(self.subset)}


class SearchError(NumericalError):
    """One or more per-node blanket searches failed."""

    def __init__(self, failures: dict):
        self.failures = dict(sorted(failures.items()))
        nodes = ", ".join(str(j) for j in self.failures)
        super().__init__(f"blanket search failed for node(s) {nodes}")

    def details(self) -> dict:
        return {"failures": {str(j): str(e) for j, e in self.failures.items()}}


class ConvergenceError(FMPLError, RuntimeError):
    exit_code = 4
    kind = "non_convergence"

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual

    def details(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual}
