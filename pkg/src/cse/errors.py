class CseError(Exception):
    """Base class for pipeline errors."""


class ShapeMismatchError(CseError):
    """Input does not match the shape a stage requires."""


class NotFlaggedUnsafeError(CseError):
    """Counterfactual search was asked to flip an image the classifier already calls safe."""


class NoCounterfactualError(CseError):
    """No region subset within the budget flips the classifier."""


class WeightFileError(CseError):
    """Malformed or incompatible weight file."""
