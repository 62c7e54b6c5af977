# Description: Error taxonomy. Every error carries the process exit code the CLI
# reports for it, the same way the API layer pairs errors with an HTTP status.

from typing import Optional


class IdsBenchError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# Configuration errors (exit 2)
class ConfigInvalid(IdsBenchError):
    exit_code = 2

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


# Data errors (exit 3)
class DataError(IdsBenchError):
    exit_code = 3


class DatasetFileNotFound(DataError):
    def __init__(self, path: str):
        super().__init__(f"dataset file not found: {path}")
        self.path = path


class SchemaMismatch(DataError):
    def __init__(self, column: str, reason: str = "missing from header"):
        super().__init__(f"column '{column}' {reason}")
        self.column = column


class UnparseableRow(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class TooManyUnparseableRows(DataError):
    def __init__(self, skipped: list[UnparseableRow], total: int):
        super().__init__(
            f"{len(skipped)} of {total} rows unparseable (limit is 1%), "
            f"first: {skipped[0].detail if skipped else '-'}"
        )
        self.skipped = skipped
        self.total = total


class InsufficientInstances(DataError):
    def __init__(self, label: int, available: int, requested: int):
        name = "attack" if label == 1 else "normal"
        super().__init__(
            f"requested {requested} {name} instances, only {available} available"
        )
        self.label = label
        self.available = available
        self.requested = requested


class KTooLarge(DataError):
    def __init__(self, k: int, n: int):
        super().__init__(f"k={k} folds requested for {n} rows")
        self.k = k
        self.n = n


class EmptyTrainingSet(DataError):
    def __init__(self):
        super().__init__("training set is empty")


class SingleClassTrainingSet(DataError):
    def __init__(self, label: int):
        super().__init__(f"training set only holds class {label}")
        self.label = label


class SingleClassTruth(DataError):
    def __init__(self):
        super().__init__("AUC needs both classes in the ground truth")


class EmptyTestSet(DataError):
    def __init__(self):
        super().__init__("test set is empty")


class EmptyInput(DataError):
    def __init__(self, what: str = "input"):
        super().__init__(f"{what} is empty")


class LengthMismatch(DataError):
    def __init__(self, left: int, right: int):
        super().__init__(f"length mismatch: {left} != {right}")


# Model / computation errors (exit 1)
class ModelError(IdsBenchError):
    pass


class DimensionMismatch(ModelError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} features, got {got}")
        self.expected = expected
        self.got = got


class EmptyNode(ModelError):
    def __init__(self):
        super().__init__("impurity of an empty node is undefined")


class UndefinedMetric(ModelError):
    def __init__(self, name: str):
        super().__init__(f"{name} is undefined (zero denominator)")
        self.name = name


class DegenerateStatistic(ModelError):
    def __init__(self, q: float, bound: float):
        super().__init__(f"Friedman Q={q} equals d(k-1)={bound}; F is undefined")


class EmptySpace(ModelError):
    def __init__(self, param: Optional[str] = None):
        where = f" ('{param}' has no values)" if param else ""
        super().__init__(f"parameter search space is empty{where}")
