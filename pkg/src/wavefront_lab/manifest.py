"""Run provenance: canonical config digests and the run manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigurationError

ARTIFACT_VERSION = "0.1.0"


def canonical_json(obj) -> str:
    """Deterministic JSON serialization (sorted keys, no whitespace drift)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    """Hex sha256 of the canonical serialization of a config mapping."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Full provenance of one experiment run.

    ``started`` and ``finished`` are ISO timestamps and are the only fields
    that may differ between byte-identical re-runs; everything else is a
    pure function of the config.
    """

    experiment: str
    config: dict
    master_seed: int
    config_digest: str = ""
    artifact_version: str = ARTIFACT_VERSION
    started: Optional[str] = None
    finished: Optional[str] = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not self.config_digest:
            self.config_digest = config_digest(self.config)

    def verify_digest(self) -> None:
        actual = config_digest(self.config)
        if actual != self.config_digest:
            raise ConfigurationError(
                f"manifest digest mismatch: stored {self.config_digest}, recomputed {actual}"
            )

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "config_digest": self.config_digest,
            "master_seed": self.master_seed,
            "artifact_version": self.artifact_version,
            "started": self.started,
            "finished": self.finished,
            "warnings": self.warnings,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            data = json.load(fh)
        m = cls(
            experiment=data["experiment"],
            config=data["config"],
            master_seed=data["master_seed"],
            config_digest=data["config_digest"],
            artifact_version=data.get("artifact_version", ARTIFACT_VERSION),
            started=data.get("started"),
            finished=data.get("finished"),
            warnings=data.get("warnings", []),
        )
        m.verify_digest()
        return m
