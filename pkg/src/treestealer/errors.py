"""Exception types shared across the toolkit."""


class TreeStealerError(Exception):
    """Base class for all toolkit errors."""


class MalformedTreeError(TreeStealerError):
    """Tree structure violates an invariant (dangling child, bad depth, ...)."""


class DimensionMismatchError(TreeStealerError):
    """Input vector length does not match the tree's feature count."""


class SchemaError(TreeStealerError):
    """A serialized tree or report file violates the expected schema."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InfeasibleGridError(TreeStealerError):
    """The threshold grid has too few points for the requested tree shape."""


class TruncatedTraceError(TreeStealerError):
    """A side-channel trace lost its oldest decisions (strict mode only)."""

    def __init__(self, message: str, recovered_depth: int, true_depth: int):
        super().__init__(message)
        self.recovered_depth = recovered_depth
        self.true_depth = true_depth


class DoubletDecodeError(TreeStealerError):
    """A doublet stream does not parse as per-node branch patterns."""

    def __init__(self, message: str, block_index: int):
        super().__init__(message)
        self.block_index = block_index


class CollisionAmbiguityError(TreeStealerError):
    """Register readout found no unique mispredict maximum at a position."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


class ChannelDecodeError(TreeStealerError):
    """A step-counter event log is inconsistent with the node offsets."""


class PathDeviationError(TreeStealerError):
    """A crafted input left its intended path above the target node.

    Raised instead of corrupting the shadow tree; the usual cause is an
    extraction resolution coarser than the target's threshold spacing,
    so sweep harnesses respond by halving epsilon.
    """

    def __init__(self, message: str, node_id: int):
        super().__init__(message)
        self.node_id = node_id


class FeatureNotFoundError(TreeStealerError):
    """No feature probe flipped the target node's decision."""

    def __init__(self, message: str, node_id: int):
        super().__init__(message)
        self.node_id = node_id


class ChannelInconsistencyError(TreeStealerError):
    """Observed traces contradict the shadow structure built so far."""
