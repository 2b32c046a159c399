class ExtractorError(Exception):
    """Base class for everything this package raises on purpose."""


class RegistryError(ExtractorError):
    """Unknown model id, malformed registry entry, or checkpoint mismatch."""


class DatasetError(ExtractorError):
    """Missing/empty dataset, or undecodable images.

    ``failures`` lists (path, reason) pairs when individual files failed,
    so callers can print a per-file report.
    """

    def __init__(self, message: str, failures: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.failures = failures or []
