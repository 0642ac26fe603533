"""Exception types shared across the package.

The CLI maps these onto process exit codes; library callers can catch them
individually. Everything raised on purpose derives from CrowdPlanError so
callers can distinguish deliberate failures from bugs.
"""

from __future__ import annotations


class CrowdPlanError(Exception):
    """Base class for all deliberate failures."""


class InputError(CrowdPlanError):
    """Malformed or inconsistent input: bad shapes, bad files, bad arguments."""


class MissingWorkerCptError(InputError):
    """A vote references a worker the model has no table for.

    This is the sparsity failure mode of per-worker models: a plan cannot be
    scored against workers that were never observed during fitting.
    """

    def __init__(self, worker_id: str, path_index: int | None = None):
        self.worker_id = worker_id
        self.path_index = path_index
        where = f" on path {path_index}" if path_index is not None else ""
        super().__init__(f"no CPT for worker {worker_id!r}{where}")


class ResourceLimitError(CrowdPlanError):
    """An enumeration or search would exceed its configured size limit."""


class NumericError(CrowdPlanError):
    """A computation produced values outside its guaranteed numeric envelope."""
