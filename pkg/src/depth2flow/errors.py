"""Exception types raised by depth2flow.

Everything derives from ValueError so callers that only care about
"bad input" can keep catching the builtin.
"""


class Depth2FlowError(ValueError):
    """Base class for all depth2flow errors"""


class DimensionMismatchError(Depth2FlowError):
    """Two fields that must share a pixel grid do not"""

    def __init__(self, what: str, first, second):
        super().__init__(
            f"incompatible fields: {what} {tuple(first)} vs {tuple(second)}"
        )


class EmptyWarpError(Depth2FlowError):
    """A warp had no valid source pixel to move"""

    def __init__(self, message: str = "empty warp"):
        super().__init__(message)


class DegenerateCameraError(Depth2FlowError):
    pass


class DegenerateMotionError(Depth2FlowError):
    pass


class CodecError(Depth2FlowError):
    """A flow, depth or image file could not be encoded or decoded"""


class FeatureError(Depth2FlowError):
    pass


class ConfigError(Depth2FlowError):
    pass


class AugmentationError(Depth2FlowError):
    """An augmentation spec is out of its configured range"""
