"""Exception types shared across the package."""


class LospError(Exception):
    """Base class for all package errors."""


class ConfigError(LospError):
    """Invalid configuration document or CLI arguments (exit code 2)."""


class PhantomError(LospError):
    """Phantom generation failed (placement budget exhausted)."""


class FormatError(LospError):
    """Corrupt or incompatible binary file."""


class NumericalError(LospError):
    """Non-finite values encountered during optimization (exit code 3)."""
