"""Scene directories, camera text files, PNG images and the binary stack format.

Scene layout::

    scene/
      images/NNN.png      8-bit RGB views
      cams/NNN.txt        camera file per view (same stem as the image)
      split.txt           optional: "train: i j k ..." / "test: ..." lines

Camera file (whitespace-separated tokens)::

    extrinsic
    <4 rows x 4 floats, world-to-camera, row-major>
    intrinsic
    <3 rows x 3 floats>
    depth_range
    <z_near z_far>

Binary plane-stack format (".impi", little-endian): magic "IMPI", u32
version (=1), u32 width/height/plane-count, 9 f64 intrinsics (row-major K),
16 f64 world-to-camera matrix, f64 z_near/z_far, plane-count f64 depths,
then float32 payload in [plane][row][col][r, g, b, sigma] order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    MpiBadMagicError,
    MpiFormatError,
    MpiTruncatedError,
    MpiUnsupportedVersionError,
    SceneFormatError,
)
from .geometry import Camera, DepthSampling, Intrinsics, RigidTransform
from .mpi import MultiplaneImage

MAGIC = b"IMPI"
VERSION = 1
_ROTATION_FILE_TOL = 1e-4


@dataclass(frozen=True)
class SceneView:
    view_id: str
    camera: Camera
    image: np.ndarray = field(repr=False)
    split: str = "train"


@dataclass(frozen=True)
class SceneDirectory:
    root: Path
    views: list

    def split_views(self, split: str) -> list:
        return [v for v in self.views if v.split == split]

    def eval_tuples(self) -> list:
        return [(v.view_id, v.split, v.camera, v.image) for v in self.views]


def load_image(path) -> np.ndarray:
    """8-bit RGB PNG to float32 in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    return rgb / 255.0


def save_image(path, image: np.ndarray) -> None:
    """Float image in [0, 1] to 8-bit RGB PNG (round + clamp)."""
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_depth_png(path, depth: np.ndarray, z_near: float, z_far: float) -> None:
    """16-bit grayscale PNG normalized over [z_near, z_far], plus a sidecar
    text file recording the normalization."""
    norm = (np.asarray(depth, dtype=np.float64) - z_near) / (z_far - z_near)
    gray = np.clip(np.rint(norm * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(gray, mode="I;16").save(path)
    sidecar = Path(path).with_suffix(".norm.txt")
    sidecar.write_text(f"z_near {z_near!r}\nz_far {z_far!r}\n")


def _tokenize(text: str):
    tokens = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            tokens.append((tok, line_no))
    return tokens


class _TokenReader:
    def __init__(self, tokens, source: str):
        self.tokens = tokens
        self.pos = 0
        self.source = source

    def exhausted(self) -> bool:
        return self.pos >= len(self.tokens)

    def _next(self):
        if self.exhausted():
            raise SceneFormatError(f"{self.source}: unexpected end of file")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def keyword(self, expected: str) -> None:
        tok, line = self._next()
        if tok != expected:
            raise SceneFormatError(
                f"{self.source}: line {line}: expected '{expected}', got '{tok}'"
            )

    def floats(self, count: int) -> np.ndarray:
        out = np.empty(count)
        for i in range(count):
            tok, line = self._next()
            try:
                out[i] = float(tok)
            except ValueError:
                raise SceneFormatError(
                    f"{self.source}: line {line}: expected a number, got '{tok}'"
                ) from None
        return out


def _camera_from_reader(reader: _TokenReader, width: int, height: int) -> Camera:
    reader.keyword("extrinsic")
    ext = reader.floats(16).reshape(4, 4)
    reader.keyword("intrinsic")
    k = reader.floats(9).reshape(3, 3)
    reader.keyword("depth_range")
    z_near, z_far = reader.floats(2)
    rot = ext[:3, :3]
    err = np.abs(rot @ rot.T - np.eye(3)).max()
    det = np.linalg.det(rot)
    if err > _ROTATION_FILE_TOL or abs(det - 1.0) > _ROTATION_FILE_TOL:
        raise SceneFormatError(
            f"{reader.source}: rotation is not orthonormal with det +1 "
            f"(deviation {max(err, abs(det - 1.0)):.2e})"
        )
    if err > 1e-9:
        # Snap file-rounding noise back onto the rotation manifold.
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
        if np.linalg.det(rot) < 0:
            u[:, -1] *= -1
            rot = u @ vt
    if not z_near < z_far:
        raise SceneFormatError(
            f"{reader.source}: depth range must satisfy z_near < z_far, "
            f"got ({z_near}, {z_far})"
        )
    try:
        intr = Intrinsics.from_matrix(k, width, height)
        return Camera(intr, RigidTransform(rot, ext[:3, 3]), (z_near, z_far))
    except Exception as err2:
        raise SceneFormatError(f"{reader.source}: {err2}") from None


def parse_camera(text: str, width: int, height: int, source: str = "<camera>") -> Camera:
    """Parse a single camera block; tokens may be split across lines freely."""
    reader = _TokenReader(_tokenize(text), source)
    cam = _camera_from_reader(reader, width, height)
    if not reader.exhausted():
        tok, line = reader.tokens[reader.pos]
        raise SceneFormatError(f"{source}: line {line}: trailing content '{tok}'")
    return cam


def parse_camera_file(path, width: int, height: int) -> Camera:
    return parse_camera(Path(path).read_text(), width, height, source=str(path))


def parse_camera_path_file(path, width: int, height: int) -> list:
    """Parse a file holding one or more concatenated camera blocks."""
    reader = _TokenReader(_tokenize(Path(path).read_text()), str(path))
    cameras = []
    while not reader.exhausted():
        cameras.append(_camera_from_reader(reader, width, height))
    if not cameras:
        raise SceneFormatError(f"{path}: no camera blocks found")
    return cameras


def format_camera(camera: Camera) -> str:
    ext = camera.world_to_camera.matrix4()
    k = camera.intrinsics.matrix()
    lines = ["extrinsic"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in ext]
    lines.append("intrinsic")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in k]
    lines.append("depth_range")
    lines.append(f"{camera.z_near:.17g} {camera.z_far:.17g}")
    return "\n".join(lines) + "\n"


def _parse_split_file(path: Path, view_count: int):
    assignment = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise SceneFormatError(f"{path}: line {line_no}: expected 'name: indices'")
        name, _, rest = line.partition(":")
        name = name.strip()
        if name not in ("train", "test"):
            raise SceneFormatError(
                f"{path}: line {line_no}: unknown split '{name}'"
            )
        for tok in rest.split():
            try:
                idx = int(tok)
            except ValueError:
                raise SceneFormatError(
                    f"{path}: line {line_no}: bad view index '{tok}'"
                ) from None
            if not (0 <= idx < view_count):
                raise SceneFormatError(
                    f"{path}: line {line_no}: view index {idx} out of range "
                    f"(scene has {view_count} views)"
                )
            if idx in assignment:
                raise SceneFormatError(
                    f"{path}: line {line_no}: view index {idx} assigned twice"
                )
            assignment[idx] = name
    return assignment


def load_scene(path) -> SceneDirectory:
    """Load a scene directory into decoded views sorted by view name."""
    root = Path(path)
    images_dir = root / "images"
    cams_dir = root / "cams"
    if not images_dir.is_dir() or not cams_dir.is_dir():
        raise SceneFormatError(
            f"{root}: scene directory needs 'images/' and 'cams/' subdirectories"
        )
    image_stems = {p.stem: p for p in images_dir.glob("*.png")}
    cam_stems = {p.stem: p for p in cams_dir.glob("*.txt")}
    if not image_stems:
        raise SceneFormatError(f"{root}: no images found in {images_dir}")
    for stem in sorted(image_stems.keys() | cam_stems.keys()):
        if stem not in image_stems:
            raise SceneFormatError(f"{root}: view '{stem}' has a camera but no image")
        if stem not in cam_stems:
            raise SceneFormatError(f"{root}: view '{stem}' has an image but no camera")
    stems = sorted(image_stems)
    views = []
    for stem in stems:
        image = load_image(image_stems[stem])
        h, w = image.shape[:2]
        camera = parse_camera_file(cam_stems[stem], w, h)
        intr = camera.intrinsics
        if (intr.width, intr.height) != (w, h):
            raise SceneFormatError(
                f"{cam_stems[stem]}: intrinsics size {intr.width}x{intr.height} "
                f"does not match image size {w}x{h}"
            )
        views.append(SceneView(view_id=stem, camera=camera, image=image))
    split_path = root / "split.txt"
    if split_path.exists():
        assignment = _parse_split_file(split_path, len(views))
        views = [
            SceneView(v.view_id, v.camera, v.image,
                      assignment.get(i, "train"))
            for i, v in enumerate(views)
        ]
    return SceneDirectory(root=root, views=views)


def write_scene(path, cameras: list, images: list, train_indices, test_indices,
                force: bool = False) -> Path:
    """Write views as a scene directory (8-bit PNGs + camera files + split)."""
    root = Path(path)
    if root.exists() and any(root.iterdir()) and not force:
        raise SceneFormatError(f"{root}: already exists (use force to overwrite)")
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "cams").mkdir(parents=True, exist_ok=True)
    for i, (camera, image) in enumerate(zip(cameras, images)):
        stem = f"{i:03d}"
        save_image(root / "images" / f"{stem}.png", image)
        (root / "cams" / f"{stem}.txt").write_text(format_camera(camera))
    train = " ".join(str(i) for i in train_indices)
    test = " ".join(str(i) for i in test_indices)
    (root / "split.txt").write_text(f"train: {train}\ntest: {test}\n")
    return root


def save_mpi(mpi: MultiplaneImage, path) -> None:
    """Bit-exact binary serialization of a plane stack."""
    cam = mpi.reference_camera
    header = struct.pack(
        "<4sIIII", MAGIC, VERSION, mpi.width, mpi.height, mpi.depth_count
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(cam.intrinsics.matrix().astype("<f8").tobytes())
        fh.write(cam.world_to_camera.matrix4().astype("<f8").tobytes())
        fh.write(struct.pack("<dd", cam.z_near, cam.z_far))
        fh.write(mpi.sampling.depths.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(mpi.planes).astype("<f4").tobytes())


def _read_exact(fh, count: int, what: str, path) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise MpiTruncatedError(
            f"{path}: truncated while reading {what} "
            f"(wanted {count} bytes, got {len(data)})"
        )
    return data


def load_mpi(path) -> MultiplaneImage:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic", path)
        if magic != MAGIC:
            raise MpiBadMagicError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version", path))
        if version != VERSION:
            raise MpiUnsupportedVersionError(
                f"{path}: unsupported version {version} (expected {VERSION})"
            )
        width, height, depth_count = struct.unpack(
            "<III", _read_exact(fh, 12, "dimensions", path)
        )
        k = np.frombuffer(_read_exact(fh, 72, "intrinsics", path), dtype="<f8")
        ext = np.frombuffer(_read_exact(fh, 128, "extrinsics", path), dtype="<f8")
        z_near, z_far = struct.unpack("<dd", _read_exact(fh, 16, "depth range", path))
        depths = np.frombuffer(
            _read_exact(fh, 8 * depth_count, "plane depths", path), dtype="<f8"
        )
        payload = np.frombuffer(
            _read_exact(
                fh, 4 * depth_count * height * width * 4, "plane payload", path
            ),
            dtype="<f4",
        )
        if fh.read(1):
            raise MpiFormatError(f"{path}: trailing bytes after payload")
    camera = Camera(
        Intrinsics.from_matrix(k.reshape(3, 3), width, height),
        RigidTransform.from_matrix4(ext.reshape(4, 4)),
        (z_near, z_far),
    )
    return MultiplaneImage(
        planes=payload.reshape(depth_count, height, width, 4).copy(),
        sampling=DepthSampling(depths=depths.copy()),
        reference_camera=camera,
    )
