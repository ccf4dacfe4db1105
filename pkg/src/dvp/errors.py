"""Exception hierarchy shared across the pipeline.

Every error carries a stable ``code`` string so the HTTP layer and the CLI
can map failures without string matching on messages.
"""

from __future__ import annotations


class DvpError(Exception):
    """Base class for all domain errors."""

    code = "internal"
    retryable = False

    def __init__(self, message: str = ""):
        super().__init__(message or self.__doc__ or self.code)


# --- similarity / embeddings ------------------------------------------------

class DimensionMismatch(DvpError):
    code = "dimension_mismatch"


class ZeroVector(DvpError):
    code = "zero_vector"


class KTooLarge(DvpError):
    code = "k_too_large"


# --- theme bank ---------------------------------------------------------------

class EmptyBank(DvpError):
    code = "empty_bank"


class UnreadableDirectory(DvpError):
    code = "unreadable_directory"


class BankLocked(DvpError):
    code = "bank_locked"


class PartialCache(DvpError):
    code = "partial_cache"

    def __init__(self, missing_ids):
        self.missing_ids = list(missing_ids)
        super().__init__(f"embedding cache missing {len(self.missing_ids)} entries")


# --- backends ----------------------------------------------------------------

class BackendUnavailable(DvpError):
    code = "backend_unavailable"
    retryable = True


class BackendTimeout(DvpError):
    code = "timeout"
    retryable = True


class ContentRejected(DvpError):
    code = "content_rejected"


# --- intent extraction ---------------------------------------------------------

class EmptyPrompt(DvpError):
    code = "empty_prompt"


class EmptyElement(DvpError):
    code = "empty_element"


# --- layout --------------------------------------------------------------------

class QTooLarge(DvpError):
    code = "q_too_large"


class TooManyElements(DvpError):
    code = "too_many_elements"


class GridTooSmall(DvpError):
    code = "grid_too_small"


class PinOutOfBounds(DvpError):
    code = "pin_out_of_bounds"


class PinOnCanvas(DvpError):
    code = "pin_on_canvas"


# --- composer ----------------------------------------------------------------

class MissingImage(DvpError):
    code = "missing_image"


class ZeroSizeCell(DvpError):
    code = "zero_size_cell"


# --- jobs / engine -------------------------------------------------------------

class UnknownJob(DvpError):
    code = "unknown_job"


class UnknownSession(DvpError):
    code = "unknown_session"


class UnknownBank(DvpError):
    code = "unknown_bank"


class EmptyInput(DvpError):
    code = "empty_input"


class PartialRun(DvpError):
    code = "partial_run"

    def __init__(self, failed_arrangements):
        self.failed_arrangements = dict(failed_arrangements)
        super().__init__(
            "arrangements failed: "
            + ", ".join(str(k) for k in sorted(self.failed_arrangements))
        )
