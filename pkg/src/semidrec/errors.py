"""Exception types shared across the pipeline, mapped to CLI exit codes."""


class UsageError(Exception):
    """Bad command line or config file (exit code 1)."""


class DataError(Exception):
    """Unrecoverable problem with input data or missing artifacts (exit code 2)."""


class TrainingDivergence(RuntimeError):
    """Non-finite loss or gradient during training (exit code 3).

    Carries the loss trace accumulated before the divergence so a run
    can be inspected post mortem.
    """

    def __init__(self, message, trace=None, epoch=None, batch=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.epoch = epoch
        self.batch = batch
