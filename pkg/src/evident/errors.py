class EvidentError(Exception):
    """Base class for errors raised by this package."""


class CorpusError(EvidentError):
    """Malformed or inconsistent corpus, splits, labels, or evidence data."""


class GatewayError(EvidentError):
    """Text-generation or embedding backend failure (transport or empty output)."""
