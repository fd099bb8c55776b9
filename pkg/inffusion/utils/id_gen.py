import hashlib
import uuid
from pathlib import Path
from typing import Iterable, Union


def generate_id() -> str:
    """New run identifier"""
    return str(uuid.uuid4())


def blob_hash(content: bytes) -> str:
    """Git blob hash of raw content"""
    header = f"blob {len(content)}\0".encode()
    return hashlib.sha1(header + content).hexdigest()


def content_hash(paths: Iterable[Union[str, Path]]) -> str:
    """
    Git-style hash over a set of input files.

    Each file contributes a "<blob hash> <name>" line; lines are sorted so the
    result does not depend on argument order, then hashed as a blob.
    """
    lines = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            for child in sorted(p for p in path.rglob("*") if p.is_file()):
                lines.append(f"{blob_hash(child.read_bytes())} {child.relative_to(path).as_posix()}")
        elif path.exists():
            lines.append(f"{blob_hash(path.read_bytes())} {path.name}")
    return blob_hash("\n".join(sorted(lines)).encode())
