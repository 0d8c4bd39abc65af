"""Exception types raised across the package."""


class AstBridgeError(Exception):
    """Base class for all library errors."""


class SchemaError(AstBridgeError):
    """Interchange file is missing a required field or has a wrong type."""


class MalformedTree(AstBridgeError):
    """Tree invariants violated: cycle, dangling child, duplicate id, multiple roots."""


class OversizeTree(AstBridgeError):
    """Tree exceeds the configured node cap."""


class EmptyCorpus(AstBridgeError):
    """Corpus directory contains no snippets."""


class DuplicateSnippet(AstBridgeError):
    """Two corpus files map to the same (task_id, language, source_id) key."""


class EmptySignature(AstBridgeError):
    """A node label produced no signature features at all."""


class ProviderUnavailable(AstBridgeError):
    """External similarity endpoint could not be reached."""


class ShapeMismatch(AstBridgeError):
    """Tensor operands have incompatible shapes."""


class NonFiniteValue(AstBridgeError):
    """An operation produced NaN or Inf."""


class UnknownLabel(AstBridgeError):
    """Universal label id outside the embedding table range."""


class TooFewTasks(AstBridgeError):
    """Not enough tasks to form train/valid/test splits."""


class NonFiniteLoss(AstBridgeError):
    """Training loss became NaN or Inf; diagnostics were dumped."""
