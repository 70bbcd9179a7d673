# src/gs_compositor/nn/params.py
"""Named parameter collections with AdamW state, and their binary checkpoint format"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
import structlog

from ..config.constants import PARAMS_MAGIC, PARAMS_VERSION
from ..core.errors import DataIOError, DomainError
from ..core.utils import atomic_write_bytes, read_bytes

logger = structlog.get_logger()


@dataclass
class ParamState:
    """First/second AdamW moments and step count of one parameter"""
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class ModelParams:
    """
    Ordered map of parameter name to array, plus per-parameter optimizer state

    Values keep the dtype they were created with (float32 for networks,
    float64 for scene fitting). Names are unique; iteration order is the
    insertion order and fixes the checkpoint layout.
    """
    values: Dict[str, np.ndarray] = field(default_factory=dict)
    state: Dict[str, ParamState] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.values:
            self._ensure_state(name)

    def _ensure_state(self, name: str) -> ParamState:
        value = self.values[name]
        state = self.state.get(name)
        if state is None or state.m.shape != value.shape:
            state = ParamState(m=np.zeros_like(value), v=np.zeros_like(value))
            self.state[name] = state
        return state

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise DomainError(f"duplicate parameter name {name!r}")
        self.values[name] = value
        self._ensure_state(name)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name in self.values and self.values[name].shape != np.shape(value):
            raise DomainError(
                f"parameter {name!r} has shape {self.values[name].shape}, got {np.shape(value)}"
            )
        self.values[name] = value
        self._ensure_state(name)

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.values.items())

    def names(self) -> List[str]:
        return list(self.values)

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        """Parameters under ``prefix.`` with the prefix stripped"""
        head = prefix + "."
        return {k[len(head):]: v for k, v in self.values.items() if k.startswith(head)}

    def copy(self) -> "ModelParams":
        params = ModelParams({k: v.copy() for k, v in self.values.items()})
        for name, st in self.state.items():
            params.state[name] = ParamState(st.m.copy(), st.v.copy(), st.step)
        return params

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.values.items()}

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact equality of names, shapes and values"""
        return (
            self.names() == other.names()
            and all(np.array_equal(self[k], other[k]) for k in self.values)
        )


def params_to_bytes(params: ModelParams) -> bytes:
    """
    Encode parameter values (not optimizer state)

    Layout: magic ``MVCL``, version u32, count u32, then per parameter the
    u32 name length, UTF-8 name, u32 rank, u32 extents and little-endian
    float32 data.
    """
    chunks = [PARAMS_MAGIC, struct.pack("<II", PARAMS_VERSION, len(params))]
    for name, value in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(chunks)


def params_from_bytes(data: bytes, source: Optional[Union[str, Path]] = None) -> ModelParams:
    """Decode :func:`params_to_bytes` output; raises DataIOError when malformed"""
    view = memoryview(data)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise DataIOError("Truncated parameter file", source)
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(take(4)) != PARAMS_MAGIC:
        raise DataIOError("Not a parameter file (bad magic)", source)
    version, count = struct.unpack("<II", take(8))
    if version != PARAMS_VERSION:
        raise DataIOError(f"Unsupported parameter file version {version}", source)

    params = ModelParams()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataIOError("Parameter name is not UTF-8", source) from e
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape, dtype=np.int64))
        value = np.frombuffer(bytes(take(4 * n)), dtype="<f4").astype(np.float32).reshape(shape)
        try:
            params.add(name, value)
        except DomainError as e:
            raise DataIOError(str(e), source) from e
    if offset != len(view):
        raise DataIOError("Trailing bytes after parameter records", source)
    return params


def save_params(params: ModelParams, path: Union[str, Path]) -> Path:
    path = atomic_write_bytes(path, params_to_bytes(params))
    logger.info("Saved parameters", path=str(path), count=len(params), size=params.size)
    return path


def load_params(path: Union[str, Path]) -> ModelParams:
    params = params_from_bytes(read_bytes(path), path)
    logger.debug("Loaded parameters", path=str(path), count=len(params))
    return params


def check_compatible(params: ModelParams, template: Mapping[str, np.ndarray], path=None) -> None:
    """Loaded parameters must carry exactly the template's names and shapes"""
    missing = sorted(set(template) - set(params.values))
    extra = sorted(set(params.values) - set(template))
    if missing or extra:
        raise DataIOError(
            f"Checkpoint does not match the model (missing={missing[:5]}, extra={extra[:5]})", path
        )
    for name, value in template.items():
        if params[name].shape != value.shape:
            raise DataIOError(
                f"Checkpoint parameter {name!r} has shape {params[name].shape}, "
                f"expected {value.shape}", path
            )
