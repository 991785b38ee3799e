import base64
import contextlib
import json
import logging
import zlib
from pathlib import Path

from .errors import DeviceFileError

try:
    import fcntl
except ImportError:  # non-POSIX platforms: locking degrades to a no-op
    fcntl = None

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def parse_json_document(content: str, source: str = "<string>") -> dict:
    """Parses a whole document as JSON; anything around the JSON value is an error."""
    if not isinstance(content, str):
        raise DeviceFileError(f"{source}: expected text, got {type(content).__name__}")
    try:
        return json.loads(content)
    except json.JSONDecodeError as e:
        raise DeviceFileError(f"{source}: not a JSON document: {e}") from e


def canonical_json(payload) -> str:
    """Stable text form used for every file we write (sorted keys, fixed indent)."""
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


@contextlib.contextmanager
def advisory_lock(path: Path):
    """Exclusive advisory lock on `<path>.lock` while the target is written."""
    lock_path = Path(str(path) + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    with open(lock_path, "w") as handle:
        if fcntl is not None:
            fcntl.flock(handle, fcntl.LOCK_EX)
        try:
            yield
        finally:
            if fcntl is not None:
                fcntl.flock(handle, fcntl.LOCK_UN)


def write_json(path, payload) -> Path:
    path = Path(path)
    with advisory_lock(path):
        path.write_text(canonical_json(payload))
    logger.info(f"Wrote {path}")
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        content = path.read_text()
    except OSError as e:
        raise DeviceFileError(f"Cannot read {path}: {e}") from e
    return parse_json_document(content, source=str(path))


def seal_payload(payload: dict) -> str:
    """Compresses and base64-encodes a JSON payload so it is not readable at a glance."""
    raw = json.dumps(payload, sort_keys=True, allow_nan=False).encode("utf-8")
    return base64.b64encode(zlib.compress(raw, 9)).decode("ascii")


def unseal_payload(blob: str) -> dict:
    try:
        return json.loads(zlib.decompress(base64.b64decode(blob)).decode("utf-8"))
    except (ValueError, zlib.error) as e:
        raise DeviceFileError(f"Sealed section is corrupt: {e}") from e
