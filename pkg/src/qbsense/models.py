"""Configuration and run-record models for qbsense."""

from dataclasses import dataclass
from typing import Any, Literal

OutputFormat = Literal["csv", "json"]
JobStatus = Literal["ok", "error"]

ARTIFACT_VERSION = "1"


@dataclass
class Config:
    """Project-level defaults.

    Attributes:
        output_format: Result file format
        output_dir: Directory for results (None for the user data dir)
        workers: Worker pool size for sweeps
        seed: Default sampler seed
        strict_leakage: Treat truncation contamination as an error
        squeeze_grid_size: Points per angle in the squeezing scan
        squeeze_rescan_every: Full re-scan period along squeezing trajectories
    """

    output_format: OutputFormat = "csv"
    output_dir: str | None = None
    workers: int = 1
    seed: int = 0
    strict_leakage: bool = False
    squeeze_grid_size: int = 24
    squeeze_rescan_every: int = 10


@dataclass
class SweepJob:
    """One job of a parameter sweep."""

    command: str
    parameters: dict[str, Any]
    output: str

    def to_dict(self) -> dict[str, Any]:
        """Dictionary form used in the manifest."""
        return {"command": self.command, "parameters": dict(self.parameters), "output": self.output}


@dataclass
class ManifestEntry:
    """Outcome of one sweep job.

    Attributes:
        job: The job that ran
        status: ``ok`` or ``error``
        message: Error message of a failed job
        exit_code: Exit code the command would have returned
    """

    job: SweepJob
    status: JobStatus
    message: str | None = None
    exit_code: int = 0

    def to_dict(self) -> dict[str, Any]:
        """Dictionary form used in the manifest."""
        return {
            **self.job.to_dict(),
            "status": self.status,
            "message": self.message,
            "exit_code": self.exit_code,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ManifestEntry":
        """Rebuild an entry from its manifest dictionary."""
        return cls(
            job=SweepJob(
                command=str(data["command"]),
                parameters=dict(data.get("parameters", {})),
                output=str(data["output"]),
            ),
            status=data["status"],
            message=data.get("message"),
            exit_code=int(data.get("exit_code", 0)),
        )
