"""Exception types shared across the toolkit."""


class VgcapError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpec(VgcapError):
    """Geometry specification is non-physical or inconsistent."""


class GridTooCoarse(VgcapError):
    """Requested grid spacing does not resolve the capacitor gap."""


class InvalidMap(VgcapError):
    """Region map violates its invariants (e.g. missing electrodes)."""


class NoConvergence(VgcapError):
    """Iterative solve or fit stopped without reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularJacobian(VgcapError):
    """Fit Jacobian is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NoResonanceFound(VgcapError):
    """Reflection trace has no dip distinguishable from the noise floor."""


class Infeasible(VgcapError):
    """Known loss channels already exceed the measured total loss."""


class DegenerateFit(VgcapError):
    """Fitted time constants coincide; model collapses to a simpler one."""


class ConfigError(VgcapError):
    """Run configuration is missing, malformed, or references absent files."""
