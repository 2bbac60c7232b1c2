"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
front end can report failures uniformly.
"""


class ConlabelError(Exception):
    code = "error"


class EmptyImage(ConlabelError, ValueError):
    code = "empty_image"


class DuplicateId(ConlabelError, ValueError):
    code = "duplicate_id"


class UnbalancedRequest(ConlabelError, ValueError):
    code = "unbalanced_request"


class InsufficientClassMembers(ConlabelError, ValueError):
    code = "insufficient_class_members"

    def __init__(self, label, needed, available):
        super().__init__(
            f"class {label} needs {needed} members, only {available} available"
        )
        self.label = label
        self.needed = needed
        self.available = available


class MissingOracleLabel(ConlabelError, KeyError):
    code = "missing_oracle_label"

    def __str__(self):
        return f"no oracle label for instance {self.args[0]!r}"


class ManifestParseError(ConlabelError, ValueError):
    code = "parse_error"

    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DimensionMismatch(ConlabelError, ValueError):
    code = "dimension_mismatch"


class DimensionTooSmall(ConlabelError, ValueError):
    code = "dimension_too_small"


class BadDistribution(ConlabelError, ValueError):
    code = "bad_distribution"


class ShapeMismatch(ConlabelError, ValueError):
    code = "shape_mismatch"


class EmptyTrainingSet(ConlabelError, ValueError):
    code = "empty_training_set"


class LabelOutOfRange(ConlabelError, ValueError):
    code = "label_out_of_range"


class EmptyTestSet(ConlabelError, ValueError):
    code = "empty_test_set"


class EmptySet(ConlabelError, ValueError):
    code = "empty_set"


class DegenerateTruth(ConlabelError, ValueError):
    code = "degenerate_truth"


class ExternalLearnerError(ConlabelError, RuntimeError):
    code = "external_learner"


class ConfigError(ConlabelError, ValueError):
    code = "config_error"
