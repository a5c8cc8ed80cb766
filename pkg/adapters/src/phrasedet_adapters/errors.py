"""Adapter exceptions."""


class AdapterError(Exception):
    """Bad input, bad configuration, or a broken contract."""


class EngineLoadError(AdapterError):
    """A model runtime or checkpoint is unavailable."""
