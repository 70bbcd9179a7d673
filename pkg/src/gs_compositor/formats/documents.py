"""JSON and CSV documents: scenes, cameras, grid mappings, manifests, metrics, loss curves"""

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

from ..core.errors import DataIOError, DomainError
from ..core.utils import atomic_write_text, read_bytes
from ..scene.camera import Camera, CameraView
from ..scene.gaussians import GaussianScene
from ..serialization.mapping import GridMapping

PathLike = Union[str, Path]


def write_json(path: PathLike, document: Any) -> Path:
    # allow_nan=False: metric files must stay strict JSON
    try:
        text = json.dumps(document, indent=2, allow_nan=False)
    except (TypeError, ValueError) as e:
        raise DataIOError(f"Document is not serializable ({e})", path) from e
    return atomic_write_text(path, text + "\n")


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataIOError(f"Malformed JSON ({e})", path) from e


def _from_document(loader, path: PathLike, document: Any):
    try:
        return loader(document)
    except DomainError as e:
        raise DataIOError(str(e), path) from e


def save_scene(path: PathLike, scene: GaussianScene) -> Path:
    return write_json(path, scene.to_dict())


def load_scene(path: PathLike, views: Sequence[CameraView] = ()) -> GaussianScene:
    return _from_document(lambda d: GaussianScene.from_dict(d, views), path, read_json(path))


def save_camera(path: PathLike, camera: Camera) -> Path:
    return write_json(path, camera.to_dict())


def load_camera(path: PathLike) -> Camera:
    return _from_document(Camera.from_dict, path, read_json(path))


def save_mapping(path: PathLike, mapping: GridMapping) -> Path:
    return write_json(path, mapping.to_dict())


def load_mapping(path: PathLike) -> GridMapping:
    return _from_document(GridMapping.from_dict, path, read_json(path))


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k) for k in columns})
    return atomic_write_text(path, buffer.getvalue())


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    try:
        text = read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataIOError("CSV is not UTF-8", path) from e
    return list(csv.DictReader(io.StringIO(text)))
