"""Exception hierarchy shared by all incodim modules."""


class IncodimError(Exception):
    """Base class for every error raised by this package."""


class BlochOutOfBall(IncodimError):
    """A Bloch vector has norm larger than one."""


class NotHermitian(IncodimError):
    """Anti-Hermitian part of an operator exceeds the rejection threshold."""


class InvalidState(IncodimError):
    """Operator is not a density matrix (trace one, positive semidefinite)."""


class InvalidEffect(IncodimError):
    """Operator eigenvalues leave the interval [0, 1]."""


class InvalidObservable(IncodimError):
    """Effects of an observable do not sum to the identity."""


class DimensionMismatch(IncodimError):
    """Operators of unequal Hilbert-space dimension were combined."""


class NotStochastic(IncodimError):
    """Post-processing matrix has a column that does not sum to one."""


class NotTracePreserving(IncodimError):
    """Kraus operators do not satisfy the trace-preservation identity."""


class ParamOutOfRange(IncodimError):
    """Scalar parameter outside its admissible interval."""


class EmptySet(IncodimError):
    """An operation that needs at least one state received none."""


class NotOrthonormal(IncodimError):
    """Supplied vectors do not form an orthonormal basis."""


class CommutingProjections(IncodimError):
    """Two-projection detector requires noncommuting projections."""


class NotIncompatible(IncodimError):
    """Dimension quantities are undefined for compatible observables."""


class TooLarge(IncodimError):
    """Problem size exceeds the supported limits."""


class NonConvergent(IncodimError):
    """Iteration cap reached while the solver gap was still shrinking."""


class OracleAmbiguous(IncodimError):
    """Feasibility oracle finished in the ambiguous gap band."""


class SingularDirection(IncodimError):
    """Effect direction is singular for the requested chord."""


class NoSolution(IncodimError):
    """Admissible-range equations have no solution for these parameters."""


class CompatiblePair(IncodimError):
    """Noise level makes the pair compatible; nothing to search for."""


class NonMonotoneWitness(IncodimError):
    """Threshold sweep contradicts monotonicity; search resolution too coarse."""


class DegenerateChord(IncodimError):
    """Chord endpoints coincide, are antipodal, or share an x-coordinate."""


class ShapeMismatch(IncodimError):
    """Witness shape does not match the observable tuple."""


class DegenerateBlock(IncodimError):
    """Witness normalisation produced a block with vanishing trace."""


class PreconditionViolated(IncodimError):
    """Operation invoked on inputs that fail its stated precondition."""


class ParseError(IncodimError):
    """Input document could not be parsed; message carries diagnostics."""
