"""Exception types shared across the package."""


class SizeCapError(RuntimeError):
    """A computation would exceed its configured size cap."""


class InstanceFormatError(ValueError):
    """An instance/graph text file violates the documented format."""


class CertificationRefused(RuntimeError):
    """No certificate can be issued because a per-vertex condition failed."""
