class OffloadSimError(Exception):
    pass


class ConfigError(OffloadSimError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class UnknownModelError(ConfigError, KeyError):
    def __init__(self, name):
        super().__init__("model", f"unknown model {name!r}")
        self.name = name

    def __str__(self):
        return Exception.__str__(self)


class SimulationError(OffloadSimError, RuntimeError):
    pass
