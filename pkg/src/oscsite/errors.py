"""Exception hierarchy shared by all oscsite modules.

Every error raised on a contract violation derives from :class:`OscsiteError`
so callers (and the CLI) can map failures to exit codes by class name.
"""


class OscsiteError(Exception):
    """Base class for all oscsite errors."""


class ParseError(OscsiteError):
    """A case or disturbance file is malformed (bad syntax, unknown key)."""


class ValidationError(OscsiteError):
    """Structurally valid input violates a model invariant."""


class ProbabilityMassError(ValidationError):
    """Explicit disturbance probabilities do not sum to one."""


class NonConvergence(OscsiteError):
    """Newton power flow hit its iteration cap; operating point infeasible."""


class IslandedNetwork(OscsiteError):
    """The bus graph is not connected."""


class SingularReduction(OscsiteError):
    """Node elimination hit a pivot below tolerance; degenerate network."""


class DefectiveMatrix(OscsiteError):
    """Eigenvector matrix is too ill-conditioned to invert reliably."""


class DimensionMismatch(OscsiteError):
    """A vector or matrix argument has the wrong length/shape."""


class ResonantPair(OscsiteError):
    """Some eigenvalue pair sums to (near) zero; the closed form is singular."""


class UnstableSystem(OscsiteError):
    """An eigenvalue real part is above the stability margin."""


class NoOscillatoryMode(OscsiteError):
    """No complex mode found where the analysis requires one."""


class ModeMatchingAmbiguous(OscsiteError):
    """Two perturbed eigenvalues are too close to pair reliably."""


class StepTooLarge(OscsiteError):
    """Integration step cannot resolve the fastest mode."""


class TailNotDecayed(OscsiteError):
    """Trajectory too short: terminal energy not negligible versus peak."""
