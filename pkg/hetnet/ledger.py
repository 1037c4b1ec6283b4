"""
Hash-chained run manifest

A run is a list of records (run, inputs, model, grid, file ...). Each record
is sealed over its kind, its data and the seal of the record before it, so
editing any recorded seed, input hash or output hash breaks the chain.
"""
import json
from pathlib import Path
from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict

from hetnet.records import file_sha256, text_sha256, write_text

GENESIS_HASH = "0" * 64


def seal(kind: str, data: Dict[str, Any], previous_hash: str) -> str:
    return text_sha256(json.dumps([kind, data, previous_hash], sort_keys=True, separators=(",", ":")))


class Record(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str
    data: Dict[str, Any]
    previous_hash: str
    hash: str

    def intact(self) -> bool:
        return self.hash == seal(self.kind, self.data, self.previous_hash)


class RunLedger:
    """Ordered record of what a run consumed and produced"""

    def __init__(self, run: Dict[str, Any]):
        self.entries: List[Record] = []
        self.record("run", **run)

    @property
    def head(self) -> Record:
        return self.entries[-1]

    def record(self, kind: str, **data: Any) -> Record:
        previous = self.entries[-1].hash if self.entries else GENESIS_HASH
        entry = Record(kind=kind, data=data, previous_hash=previous, hash=seal(kind, data, previous))
        self.entries.append(entry)
        return entry

    def record_file(self, path: Path, root: Path) -> Record:
        path = Path(path)
        return self.record("file", name=path.relative_to(root).as_posix(), sha256=file_sha256(path))

    def verify(self) -> bool:
        previous = GENESIS_HASH
        for entry in self.entries:
            if entry.previous_hash != previous or not entry.intact():
                return False
            previous = entry.hash
        return bool(self.entries)

    def files(self) -> Dict[str, str]:
        return {e.data["name"]: e.data["sha256"] for e in self.entries if e.kind == "file"}

    def to_json(self) -> str:
        body = {"head": self.head.hash, "entries": [e.model_dump() for e in self.entries]}
        return json.dumps(body, indent=1, sort_keys=True)

    def write(self, path: Path) -> Path:
        return write_text(path, self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "RunLedger":
        # stored seals are kept as written so tampering shows up in verify()
        ledger = cls.__new__(cls)
        ledger.entries = [Record.model_validate(item) for item in json.loads(text)["entries"]]
        return ledger
