"""workload-forge: surrogate-model pipeline for distributed-computing job records."""

__version__ = "0.1.0"

from .tables import JOB_SCHEMA, Feature, Table, job_table  # noqa: F401
