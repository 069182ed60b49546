"""Line-delimited JSON corpus manifests.

Each record describes one utterance: id, wav path, transcript, and the
optional speaker/label/rating fields the transfer tasks consume. Paths
are stored relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import FormatError


@dataclass
class UtteranceRecord:
    id: str
    wav: str
    transcript: str
    speaker: Optional[str] = None
    label: Optional[int] = None
    scores: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"id": self.id, "wav": self.wav, "transcript": self.transcript}
        if self.speaker is not None:
            out["speaker"] = self.speaker
        if self.label is not None:
            out["label"] = self.label
        out.update(self.scores)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "UtteranceRecord":
        known = {"id", "wav", "transcript", "speaker", "label"}
        try:
            return cls(
                id=d["id"], wav=d["wav"], transcript=d["transcript"],
                speaker=d.get("speaker"), label=d.get("label"),
                scores={k: v for k, v in d.items() if k not in known},
            )
        except KeyError as exc:
            raise FormatError(f"manifest record missing field {exc}") from exc


def read_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(UtteranceRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
    return records


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def wav_path(record: UtteranceRecord, manifest_path) -> Path:
    """Resolve a record's wav path relative to its manifest."""
    p = Path(record.wav)
    return p if p.is_absolute() else Path(manifest_path).parent / p
