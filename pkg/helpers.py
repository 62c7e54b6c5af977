# Description: Small shared helpers: named seed derivation, a monotonic stopwatch
# and library version lookup for the run manifest.

import hashlib
import time
from importlib import metadata

SEED_BITS = 63


def derive_seed(master: int, *names: object) -> int:
    """Hash a master seed plus a path of names/indices into a per-task seed."""
    path = "/".join([str(master), *[str(name) for name in names]])
    digest = hashlib.blake2b(path.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> (64 - SEED_BITS)


class Stopwatch:
    """Context manager measuring wall-clock seconds on a monotonic clock."""

    def __init__(self):
        self.seconds = 0.0
        self._start = 0.0

    def __enter__(self) -> "Stopwatch":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = self.elapsed

    @property
    def elapsed(self) -> float:
        """Seconds since entering, readable while the block is still running."""
        return time.perf_counter() - self._start


TRACKED_LIBRARIES = ["numpy", "pandas", "scipy", "joblib", "pydantic", "loguru", "fastapi"]


def library_versions() -> dict[str, str]:
    versions = {}
    for name in TRACKED_LIBRARIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions
