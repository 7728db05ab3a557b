"""Exception taxonomy shared across the package."""


class FedGbtError(Exception):
    """Base class for all package errors."""


class InvalidInput(FedGbtError, ValueError):
    """An argument violates an operation precondition."""


class EmptySketch(FedGbtError):
    """Quantile query against a sketch with zero total weight."""


class ProtocolError(FedGbtError):
    """Client/server message violates the round protocol."""


class BarrierTimeout(ProtocolError):
    """A synchronous barrier did not collect all cohort responses."""


class FrameError(FedGbtError):
    """Byte stream does not decode to a valid frame or message."""


class IngestError(FedGbtError, ValueError):
    """CSV ingestion failure, carrying the offending location."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None or column is not None:
            where = f" (row={row}, column={column})"
        super().__init__(message + where)


class PartitionError(FedGbtError, ValueError):
    """Client partition request cannot be satisfied."""


class CalibrationError(FedGbtError):
    """Sketch accuracy calibration could not reach the requested rank error."""


class TrainingAborted(FedGbtError):
    """Federated training aborted mid-run; carries partial results."""

    def __init__(self, reason: str, ensemble=None, objectives=None):
        self.reason = reason
        self.ensemble = ensemble
        self.objectives = objectives if objectives is not None else []
        super().__init__(reason)
