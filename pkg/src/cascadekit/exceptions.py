"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation failures
exit 1, I/O failures (plain OSError) exit 2, remote-provider failures
exit 3.
"""

from __future__ import annotations


class CascadeKitError(Exception):
    """Base class for all package errors."""


class ValidationError(CascadeKitError):
    """Malformed input data, configuration, or argument."""


class RemoteError(CascadeKitError):
    """Remote prediction provider failed or returned bad data."""
