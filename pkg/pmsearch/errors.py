"""
Base exception for the pmsearch package.

Every module defines its own exception classes (``CorpusError``,
``QueryError``, ``TrainingError`` ...) deriving from :class:`PmSearchError`,
so that the command-line runner can report any library failure with a
single ``except`` clause.
"""


class PmSearchError(Exception):
    """Base class of all pmsearch errors."""
    pass
