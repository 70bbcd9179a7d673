"""Small shared helpers: atomic writes, seeded generators, ordered fan-out"""

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterable, Iterator, List, TypeVar, Union

import numpy as np
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed
from threadpoolctl import threadpool_limits

from .errors import DataIOError

T = TypeVar("T")
R = TypeVar("R")

PathLike = Union[str, Path]


@retry(
    retry=retry_if_exception_type(PermissionError),
    stop=stop_after_attempt(5),
    wait=wait_fixed(0.2),
    reraise=True,
)
def _replace(src: str, dst: Path) -> None:
    # Windows refuses to replace a file another process has open
    os.replace(src, dst)


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write ``data`` to ``path`` through a temp file and rename"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            _replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise DataIOError(f"Failed to write ({e.strerror or e})", path) from e
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    try:
        return path.read_bytes()
    except OSError as e:
        raise DataIOError(f"Failed to read ({e.strerror or e})", path) from e


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream...) without touching global state"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def ordered_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply ``func`` to every item, results in input order for any thread count"""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


@contextmanager
def deterministic_blas() -> Iterator[None]:
    """Pin BLAS to one thread so matrix products reduce in a fixed order"""
    with threadpool_limits(limits=1, user_api="blas"):
        yield
