"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: malformed sample, out-of-range parameter, mismatched grids."""


class DegenerateDensityError(ArithmeticError):
    """A density (or its plug-in estimate) has zero norm or a zero denominator."""
