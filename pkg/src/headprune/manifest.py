"""Run manifests: every CLI command records its configuration, input
fingerprints, and output fingerprints in a JSON file next to its outputs.

Manifests contain no timestamps, so a re-run with identical inputs writes
identical bytes. Downstream commands use the recorded output fingerprints
to detect stale inputs (an artifact edited or regenerated differently
after its consumer's upstream was built)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_SUFFIX = ".manifest.json"


def data_fingerprint(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_fingerprint(path) -> str:
    return data_fingerprint(Path(path).read_bytes())


@dataclass
class RunManifest:
    command: str
    version: str
    seed: int | None
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)    # path -> sha256
    outputs: dict[str, str] = field(default_factory=dict)   # name -> sha256

    def to_json(self) -> str:
        return json.dumps(
            {"command": self.command, "version": self.version, "seed": self.seed,
             "config": self.config, "inputs": self.inputs, "outputs": self.outputs},
            indent=2, sort_keys=True) + "\n"


def manifest_path(out_dir, name: str) -> Path:
    return Path(out_dir) / f"{name}{MANIFEST_SUFFIX}"


def write_manifest(out_dir, name: str, manifest: RunManifest) -> Path:
    path = manifest_path(out_dir, name)
    path.write_text(manifest.to_json(), encoding="utf-8")
    return path


def read_manifest(path) -> RunManifest:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(rec["command"], rec["version"], rec["seed"],
                       rec["config"], rec["inputs"], rec["outputs"])


def check_fresh(path) -> str:
    """Return the file's fingerprint, raising if any manifest in the file's
    directory recorded a different one (the input is stale: edited or
    overwritten after its producer ran).

    A file no manifest knows about is accepted: it may come from outside
    the pipeline.
    """
    path = Path(path)
    actual = file_fingerprint(path)
    for mpath in sorted(path.parent.glob(f"*{MANIFEST_SUFFIX}")):
        try:
            manifest = read_manifest(mpath)
        except (json.JSONDecodeError, KeyError):
            continue
        recorded = manifest.outputs.get(path.name)
        if recorded is not None and recorded != actual:
            raise ValueError(
                f"stale input {path.name}: fingerprint {actual[:12]} does not "
                f"match {recorded[:12]} recorded by {mpath.name}")
    return actual
