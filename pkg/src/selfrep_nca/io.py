"""Asset loading, binary checkpoints, CSV emitters and run configuration.

Binary container (all integers little-endian)::

    offset size  field
    0      4     magic b"SNCA"
    4      2     format version (1)
    6      2     kind: 1 = network, 2 = float array
    8      ...   kind-specific header and payload
    end-4  4     CRC-32 of every preceding byte

Network (kind 1): u32 hidden_size, u32 grid_height, u32 grid_width,
u64 training_step, u64 rng_seed, u32 parameter count, then float32 values:
layer-1 weights (hidden x 144, row-major), layer-1 bias, layer-2 weights
(16 x hidden, row-major), layer-2 bias.

Float array (kind 2): u32 ndim, ndim x u32 dims, float32 values (C order).
"""
from __future__ import annotations

import csv
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CheckpointFormatError, InvalidArgument
from .grid import Boundary, Grid, new_grid
from .rule import PARAM_NAMES, UpdateNetwork
from .training import TargetSpec

MAGIC = b"SNCA"
VERSION = 1
KIND_NETWORK = 1
KIND_ARRAY = 2
_HEAD = struct.Struct("<4sHH")
_NET = struct.Struct("<IIIQQI")


# ---------------------------------------------------------------- images

def read_rgba(path: str | Path) -> np.ndarray:
    """Straight RGBA float image in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise FileNotFoundError(f"target image not found: {path}") from None
    except OSError as err:
        raise InvalidArgument(f"cannot read image {path}: {err}") from None


def place_image(rgba: np.ndarray, grid_shape: tuple[int, int],
                offset: tuple[int, int] | None = None) -> np.ndarray:
    """Premultiply and place an image on a zero canvas, centered unless ``offset`` is given."""
    h, w = grid_shape
    ih, iw = rgba.shape[:2]
    if ih > h or iw > w:
        raise InvalidArgument(f"image of {ih}x{iw} does not fit a {h}x{w} grid")
    top, left = offset if offset is not None else ((h - ih) // 2, (w - iw) // 2)
    if top < 0 or left < 0 or top + ih > h or left + iw > w:
        raise InvalidArgument(f"image placed at {(top, left)} leaves the {h}x{w} grid")
    canvas = np.zeros((h, w, 4))
    canvas[top:top + ih, left:left + iw] = rgba
    canvas[..., :3] *= canvas[..., 3:4]
    return canvas


def load_target_image(path: str | Path, grid_shape: tuple[int, int], offset: tuple[int, int] | None = None,
                      initial: Grid | None = None, phase_label: str = "target",
                      boundary: Boundary = Boundary.TORUS) -> TargetSpec:
    image = place_image(read_rgba(path), grid_shape, offset)
    if initial is None:
        initial = new_grid(*grid_shape, boundary)
    return TargetSpec(initial, image, phase_label)


def write_png(path: str | Path, rgb: np.ndarray, upscale: int = 1) -> Path:
    path = Path(path)
    data = np.clip(np.round(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    if upscale > 1:
        data = np.repeat(np.repeat(data, upscale, axis=0), upscale, axis=1)
    Image.fromarray(data, "RGB").save(path)
    return path


# ---------------------------------------------------------------- binary container

@dataclass
class CheckpointMeta:
    training_step: int = 0
    rng_seed: int = 0
    grid_shape: tuple[int, int] = (0, 0)


def _seal(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _open(path: str | Path, kind: int) -> tuple[bytes, int]:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size + 4:
        raise CheckpointFormatError(f"{path}: truncated file")
    magic, version, found = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    if found != kind:
        raise CheckpointFormatError(f"{path}: expected record kind {kind}, found {found}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointFormatError(f"{path}: checksum mismatch (corrupt or truncated)")
    return body, _HEAD.size


def save_checkpoint(net: UpdateNetwork, meta: CheckpointMeta, path: str | Path) -> Path:
    params = np.concatenate([getattr(net, n).astype("<f4").ravel() for n in PARAM_NAMES])
    header = _HEAD.pack(MAGIC, VERSION, KIND_NETWORK) + _NET.pack(
        net.hidden_size, meta.grid_shape[0], meta.grid_shape[1], meta.training_step,
        meta.rng_seed, params.size)
    path = Path(path)
    path.write_bytes(_seal(header + params.tobytes()))
    return path


def load_checkpoint(path: str | Path, hidden_size: int | None = None) -> tuple[UpdateNetwork, CheckpointMeta]:
    body, pos = _open(path, KIND_NETWORK)
    if len(body) < pos + _NET.size:
        raise CheckpointFormatError(f"{path}: truncated header")
    hidden, gh, gw, step, seed, count = _NET.unpack_from(body, pos)
    pos += _NET.size
    expected = hidden * 144 + hidden + 16 * hidden + 16
    if count != expected or len(body) - pos != 4 * count:
        raise CheckpointFormatError(f"{path}: payload holds {(len(body) - pos) // 4} values, expected {expected}")
    if hidden_size is not None and hidden != hidden_size:
        raise InvalidArgument(f"{path}: checkpoint hidden size {hidden} does not match configured {hidden_size}")
    values = np.frombuffer(body, dtype="<f4", count=count, offset=pos).astype(np.float32)
    net = UpdateNetwork.zeros(hidden).with_flat(values)
    return net, CheckpointMeta(step, seed, (gh, gw))


def save_array(array: np.ndarray, path: str | Path) -> Path:
    array = np.asarray(array, dtype="<f4")
    header = _HEAD.pack(MAGIC, VERSION, KIND_ARRAY) + struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape)
    path = Path(path)
    path.write_bytes(_seal(header + np.ascontiguousarray(array).tobytes()))
    return path


def load_array(path: str | Path) -> np.ndarray:
    body, pos = _open(path, KIND_ARRAY)
    (ndim,) = struct.unpack_from("<I", body, pos)
    shape = struct.unpack_from(f"<{ndim}I", body, pos + 4)
    pos += 4 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(body) - pos != 4 * count:
        raise CheckpointFormatError(f"{path}: array payload size mismatch")
    return np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)


# ---------------------------------------------------------------- CSV

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- run configuration

@dataclass
class TargetEntry:
    image: str
    label: str = "target"
    offset: list[int] | None = None
    initial: str = "egg"  # "egg", "blank", "previous" or "image:<path>"


@dataclass
class LineageSettings:
    n_generations: int = 100
    n_lineages: int = 1
    growth_steps: int = 96
    division_steps: int = 96
    seed: int = 0
    render: bool = False


@dataclass
class AnalysisSettings:
    stall_window: int = 10
    stall_threshold: float = 0.05


@dataclass
class GradcheckSettings:
    n_instances: int = 20
    grid_size: int = 8
    n_steps: int = 4
    hidden_size: int = 8
    h: float = 1e-4
    tolerance: float = 1e-3
    pass_fraction: float = 0.99


@dataclass
class RunConfig:
    task: str = "fish"
    task_options: dict = field(default_factory=dict)
    targets: list[TargetEntry] = field(default_factory=list)
    grid_size: int | None = None
    egg_side: int = 3
    hidden_size: int = 128
    batch_size: int = 8
    rollout_steps: int = 96
    substitution_fraction: float = 0.5
    update_mode: str = "async"
    async_rate: float = 0.5
    async_sampling: str = "bernoulli"
    learning_rate: float = 2e-3
    lr_decay_at: float | list[float] | None = None
    total_training_steps: int = 1000
    loss_channels: str = "rgba"
    normalize_gradients: bool = True
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0
    lineage: LineageSettings = field(default_factory=LineageSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {"lineage": LineageSettings, "analysis": AnalysisSettings, "gradcheck": GradcheckSettings}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise InvalidArgument(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidArgument(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is RunConfig and key in _NESTED:
            value = _build(_NESTED[key], value, f"{where}.{key}")
        elif cls is RunConfig and key == "targets":
            value = [_build(TargetEntry, v, f"{where}.targets[{i}]") for i, v in enumerate(value)]
        kwargs[key] = value
    return cls(**kwargs)


def run_config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise InvalidArgument(f"{path}: invalid JSON ({err})") from None
    return run_config_from_dict(data)


def save_run_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- lineage directories

LINEAGE_MANIFEST = "manifest.json"


def save_lineage(records, directory: str | Path, extra: dict | None = None) -> Path:
    """One directory per lineage: ``gen_XXX.dna.bin``, ``gen_XXX.adult.bin`` and a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    generations = []
    for rec in records:
        stem = f"gen_{rec.generation:03d}"
        save_array(rec.dna, directory / f"{stem}.dna.bin")
        save_array(rec.phenotype.cells, directory / f"{stem}.adult.bin")
        generations.append({"generation": rec.generation, "viable": bool(rec.viable),
                            "dna": f"{stem}.dna.bin", "adult": f"{stem}.adult.bin"})
    manifest = dict(extra or {})
    manifest["boundary"] = records[0].phenotype.boundary.value if records else Boundary.TORUS.value
    manifest["extinct"] = bool(records) and not records[-1].viable
    manifest["generations"] = generations
    (directory / LINEAGE_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_lineage(directory: str | Path):
    from .lineage import LineageRecord

    directory = Path(directory)
    path = directory / LINEAGE_MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"no lineage manifest at {path}")
    manifest = json.loads(path.read_text())
    boundary = Boundary(manifest.get("boundary", Boundary.TORUS.value))
    records = []
    for entry in manifest["generations"]:
        cells = load_array(directory / entry["adult"])
        records.append(LineageRecord(entry["generation"], load_array(directory / entry["dna"]),
                                     Grid(cells, boundary), viable=entry["viable"]))
    return records, manifest
