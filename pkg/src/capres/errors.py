"""Exception hierarchy.

Every error carries a ``kind`` string so the command line layer can emit
machine-readable error records without inspecting class names.
"""


class CapresError(Exception):
    kind = "CapresError"

    def to_dict(self):
        return {"kind": self.kind, "message": str(self)}


def _make(name, doc):
    return type(name, (CapresError,), {"kind": name, "__doc__": doc})


SectorViolation = _make("SectorViolation", "Point outside the analyticity region of the coefficients.")
ConstructionFailure = _make("ConstructionFailure", "No admissible T0 found for the scaling contour.")
GridTooCoarse = _make("GridTooCoarse", "Fewer than 8 grid points per unit length over the potential support.")
DomainTooSmall = _make("DomainTooSmall", "Truncated domain shorter than the eigenfunction decay scale.")
NoConvergence = _make("NoConvergence", "QR iteration failed to deflate an eigenvalue.")
NearSingular = _make("NearSingular", "Shift lies (numerically) in the spectrum.")
ContourTooClose = _make("ContourTooClose", "A quadrature node of the projection circle hit the spectrum.")
BoundaryZeroSuspected = _make("BoundaryZeroSuspected", "Phase unwrapping did not resolve; a zero sits near the boundary.")
NewtonDiverged = _make("NewtonDiverged", "Newton iteration did not converge.")
InteriorSingular = _make("InteriorSingular", "Energy is an interior Dirichlet eigenvalue.")
ExteriorSingular = _make("ExteriorSingular", "Energy is an exterior Dirichlet eigenvalue.")
NoSafeInterface = _make("NoSafeInterface", "No interface candidate keeps both auxiliary spectra away from the window.")
ZeroOnContour = _make("ZeroOnContour", "The DtN function vanishes (numerically) on the counting circle.")
FitUnstable = _make("FitUnstable", "Exponent estimates along a trajectory disagree.")
PairingFailed = _make("PairingFailed", "Eigenvalue counts differ between the two scaling angles.")
ParseError = _make("ParseError", "Malformed configuration file.")
UnknownKey = _make("UnknownKey", "Configuration key not recognised.")
RangeError = _make("RangeError", "Configuration value out of range.")
MissingArtifact = _make("MissingArtifact", "Run directory lacks a required artifact.")
MatrixFormatError = _make("MatrixFormatError", "Malformed CAPM matrix file.")
