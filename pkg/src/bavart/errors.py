"""Error types shared by the library and the command line."""


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending setting (e.g. ``config.sweeps``)."""

    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key
        self.message = message
