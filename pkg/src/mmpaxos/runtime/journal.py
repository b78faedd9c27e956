"""File-backed journals using the wire codec for records."""
from __future__ import annotations

import os
from pathlib import Path

from .codec import decode_records, encode_record


class FileJournal:
    """Append-only record file.

    With ``fsync`` every append is flushed to disk before returning. Without
    it records are buffered and written by ``flush`` (hosts call it after
    each delivery), which is the batched mode replicas use.
    """

    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._records = decode_records(self.path.read_bytes()) if self.path.exists() else []
        self._file = open(self.path, "ab")
        self._pending = bytearray()

    def append(self, record) -> None:
        data = encode_record(record)
        self._records.append(record)
        if self.fsync:
            self._file.write(data)
            self._file.flush()
            os.fsync(self._file.fileno())
        else:
            self._pending += data

    def flush(self) -> None:
        if self._pending:
            self._file.write(self._pending)
            self._pending.clear()
            self._file.flush()
            os.fsync(self._file.fileno())

    def close(self) -> None:
        self.flush()
        self._file.close()

    def __iter__(self):
        return iter(list(self._records))

    def __len__(self):
        return len(self._records)
