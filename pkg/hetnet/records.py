"""
File output: atomic writes and CSV tables
"""
import csv
import hashlib
import io
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO, Union

from hetnet.errors import OutputError

PathLike = Union[str, Path]


@contextmanager
def atomic_writer(path: PathLike) -> Iterator[TextIO]:
    """
    Context manager for an output file.

    Writes go to a temp file next to the target, which replaces the target
    on success and is removed on failure.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    handle = os.fdopen(fd, "w", newline="", encoding="utf-8")
    try:
        yield handle
        handle.close()
        os.replace(tmp, path)
    except OSError as exc:
        handle.close()
        _discard(tmp)
        raise OutputError(path, exc.strerror or str(exc)) from exc
    except BaseException:
        handle.close()
        _discard(tmp)
        raise


def _discard(tmp: str) -> None:
    try:
        os.unlink(tmp)
    except FileNotFoundError:
        pass


def write_text(path: PathLike, text: str) -> Path:
    with atomic_writer(path) as fh:
        fh.write(text)
    return Path(path)


def format_cell(value: object) -> str:
    # repr keeps every float bit so reruns give identical bytes
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with atomic_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return Path(path)


def read_csv(path: PathLike) -> list:
    """Rows as dicts keyed by header"""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def file_sha256(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()
