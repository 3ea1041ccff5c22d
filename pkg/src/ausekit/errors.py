class InputError(ValueError):
    """Raised when user-provided data fails validation (CLI exit code 2)."""
