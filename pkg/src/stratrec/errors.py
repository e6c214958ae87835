"""Exception hierarchy.

Every exception carries a short machine-parsable ``code`` used by the CLI
to emit single-line ``error[<code>]: message`` diagnostics.
"""


class StratrecError(Exception):
    code = "internal"


class CorpusError(StratrecError):
    """Bad input data: missing files, malformed rows, schema violations."""

    code = "corpus"


class MappingError(CorpusError):
    """Column-mapping config references absent columns or keys."""

    code = "mapping"


class ConfigError(StratrecError):
    """Invalid model/run configuration. ``problems`` lists every issue."""

    code = "config"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CheckpointError(StratrecError):
    code = "checkpoint"


class TrainingDiverged(StratrecError):
    code = "diverged"


class ContractViolation(StratrecError):
    """Caller broke an API contract (e.g. out-of-order turn processing)."""

    code = "contract"
