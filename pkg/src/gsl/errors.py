"""Exception types shared across the package."""


class GslError(Exception):
    pass


class ConfigError(GslError):
    """Invalid configuration; CLI maps this to exit code 2."""


class ContractError(GslError):
    """A caller violated a documented precondition."""


class CheckpointError(GslError):
    """Checkpoint file is malformed or corrupt."""


class DemoFormatError(GslError):
    """Demonstration file is malformed or corrupt."""


class InsufficientDemosError(GslError):
    """A demo-recording pass could not keep a single trajectory for a variation."""

    def __init__(self, variation_id: int, message: str = ""):
        self.variation_id = variation_id
        super().__init__(message or f"no trajectory met the return threshold on variation {variation_id}")


class NonFiniteGradientError(GslError):
    """An optimizer step was rejected because the gradient had NaN/Inf entries."""
