"""Exception hierarchy shared by the library and the CLI."""


class AstraError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class UsageError(AstraError, ValueError):
    """Bad arguments: wrong shapes, out-of-range labels, exceeded caps."""

    exit_code = 2


class FormatError(AstraError, ValueError):
    """Malformed or missing input file."""

    exit_code = 3


class DegenerateInputError(AstraError, ValueError):
    """Lattice with no path of nonzero probability."""

    exit_code = 4
