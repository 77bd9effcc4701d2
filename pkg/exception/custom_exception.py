import sys
import traceback
from typing import Optional, cast


class HGTEngineException(Exception):
    """Base error. ``exit_code`` is what the CLI exits with when this escapes a subcommand."""

    exit_code = 1

    def __init__(self, error_message, error_details: Optional[object] = None):
        # Normalize message
        norm_msg = str(error_message)

        # Resolve exc_info (supports: sys module, Exception object, or current context)
        exc_type = exc_value = exc_tb = None
        if error_details is None:
            exc_type, exc_value, exc_tb = sys.exc_info()
        else:
            if hasattr(error_details, "exc_info"):  # e.g., sys
                exc_info_obj = cast(sys, error_details)
                exc_type, exc_value, exc_tb = exc_info_obj.exc_info()
            elif isinstance(error_details, BaseException):
                exc_type, exc_value, exc_tb = type(error_details), error_details, error_details.__traceback__
            else:
                exc_type, exc_value, exc_tb = sys.exc_info()

        # Walk to the last frame to report the most relevant location
        last_tb = exc_tb
        while last_tb and last_tb.tb_next:
            last_tb = last_tb.tb_next

        self.file_name = last_tb.tb_frame.f_code.co_filename if last_tb else None
        self.lineno = last_tb.tb_lineno if last_tb else None
        self.error_message = norm_msg

        # Full pretty traceback (if available)
        if exc_type and exc_tb:
            self.traceback_str = "".join(traceback.format_exception(exc_type, exc_value, exc_tb))
        else:
            self.traceback_str = ""

        super().__init__(self.__str__())

    def __str__(self):
        # Raised directly (no wrapped exception): the message is all there is
        if self.file_name is None:
            return self.error_message
        base = f"Error in [{self.file_name}] at line [{self.lineno}] | Message: {self.error_message}"
        if self.traceback_str:
            return f"{base}\nTraceback:\n{self.traceback_str}"
        return base

    def __repr__(self):
        return f"{type(self).__name__}(file={self.file_name!r}, line={self.lineno}, message={self.error_message!r})"


class ConfigError(HGTEngineException):
    exit_code = 2


class DataError(HGTEngineException):
    exit_code = 3


class NumericError(HGTEngineException):
    exit_code = 4


# --- configuration ---

class EpochOutOfRange(ConfigError):
    pass


# --- data ---

class IngestError(DataError):
    """Ingestion failure pinned to a record: ``source`` file and 1-based ``line``."""

    def __init__(self, error_message, source: str | None = None, line: int | None = None,
                 error_details: Optional[object] = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{error_message}", error_details)


class UnknownType(IngestError):
    pass


class DanglingEdge(IngestError):
    pass


class DuplicateNodeId(IngestError):
    pass


class MissingFeatures(IngestError):
    def __init__(self, node_type: str, error_message: str):
        self.node_type = node_type
        super().__init__(f"node type '{node_type}': {error_message}")


class TypeMismatch(DataError):
    pass


class UnknownRelation(DataError):
    pass


class MissingTimestamp(DataError):
    pass


class EmptySeedSet(DataError):
    pass


class EmptyBudget(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class NoPositive(DataError):
    pass


# --- numerics ---

class ShapeMismatch(NumericError):
    pass


class EmptyGroup(NumericError):
    pass


class NoNeighbors(NumericError):
    pass


class MissingGradient(NumericError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, batch_id: str, value: float):
        self.batch_id = batch_id
        self.value = value
        super().__init__(f"non-finite loss {value!r} in batch {batch_id}")

