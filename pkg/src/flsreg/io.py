"""Reading and writing point clouds (XYZ, PLY) and meshes (OBJ, PLY), and mesh sampling."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .core import PointCloud

__all__ = [
    "CloudFormatError",
    "TriangleMesh",
    "load_cloud",
    "write_cloud",
    "load_mesh",
    "sample_mesh",
]

PathLike = str | os.PathLike

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class CloudFormatError(ValueError):
    """Malformed or unsupported input.  ``line`` is 1-based; ``offset`` is a byte offset."""

    def __init__(self, message: str, path: PathLike | None = None,
                 line: int | None = None, offset: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.offset = offset
        where = []
        if self.path:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: NDArray[np.float64]
    faces: NDArray[np.int64]
    dropped_faces: int = 0

    @classmethod
    def from_arrays(cls, vertices, faces) -> TriangleMesh:
        """Validate indices and drop zero-area triangles."""
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise CloudFormatError(f"face index out of range for {len(v)} vertices")
        area = _face_areas(v, f)
        good = area > 0
        return cls(v, f[good], int((~good).sum()))

    def areas(self) -> NDArray[np.float64]:
        return _face_areas(self.vertices, self.faces)


def _face_areas(v: NDArray, f: NDArray) -> NDArray:
    if f.size == 0:
        return np.zeros(0)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


# ---------------------------------------------------------------------------
# XYZ


def _read_xyz(path: Path, data: bytes) -> NDArray:
    rows = []
    width = None
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise CloudFormatError(f"non-numeric token {bad!r}", path, line=lineno) from None
        if width is None:
            if len(vals) not in (2, 3):
                raise CloudFormatError(f"expected 2 or 3 coordinates, got {len(vals)}", path, line=lineno)
            width = len(vals)
        elif len(vals) != width:
            raise CloudFormatError(f"expected {width} coordinates, got {len(vals)}", path, line=lineno)
        if not all(np.isfinite(vals)):
            raise CloudFormatError("non-finite coordinate", path, line=lineno)
        rows.append(vals)
    if not rows:
        return np.zeros((0, 3))
    return np.array(rows, dtype=np.float64)


def _is_float(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# PLY


@dataclass
class _PlyProperty:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class _PlyElement:
    name: str
    count: int
    properties: list[_PlyProperty]


def _parse_ply_header(path: Path, data: bytes) -> tuple[str, list[_PlyElement], int, int]:
    """Returns ``(format, elements, body_offset, header_lines)``."""
    end = data.find(b"end_header")
    if not data.startswith(b"ply"):
        raise CloudFormatError("missing 'ply' magic", path, line=1, offset=0)
    if end < 0:
        raise CloudFormatError("header has no end_header", path)
    nl = data.find(b"\n", end)
    if nl < 0:
        body = len(data)
    else:
        body = nl + 1
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CloudFormatError("header is not ASCII", path, offset=exc.start) from None
    fmt = None
    elements: list[_PlyElement] = []
    lines = header.replace("\r\n", "\n").split("\n")
    for lineno, line in enumerate(lines, 1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise CloudFormatError(f"bad format line {line!r}", path, line=lineno)
            if tok[1] == "binary_big_endian":
                raise CloudFormatError("big-endian PLY is not supported", path, line=lineno)
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise CloudFormatError(f"unknown PLY format {tok[1]!r}", path, line=lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise CloudFormatError(f"bad element line {line!r}", path, line=lineno)
            try:
                count = int(tok[2])
            except ValueError:
                raise CloudFormatError(f"element count {tok[2]!r} is not an integer", path, line=lineno) from None
            if count < 0:
                raise CloudFormatError("negative element count", path, line=lineno)
            elements.append(_PlyElement(tok[1], count, []))
        elif tok[0] == "property":
            if not elements:
                raise CloudFormatError("property before any element", path, line=lineno)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise CloudFormatError(f"unknown property type in {line!r}", path, line=lineno)
                elements[-1].properties.append(_PlyProperty(tok[4], _PLY_TYPES[tok[3]], _PLY_TYPES[tok[2]]))
            elif len(tok) == 3:
                if tok[1] not in _PLY_TYPES:
                    raise CloudFormatError(f"unknown property type {tok[1]!r}", path, line=lineno)
                elements[-1].properties.append(_PlyProperty(tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise CloudFormatError(f"bad property line {line!r}", path, line=lineno)
        else:
            raise CloudFormatError(f"unexpected header keyword {tok[0]!r}", path, line=lineno)
    if fmt is None:
        raise CloudFormatError("header has no format line", path)
    return fmt, elements, body, len(lines) + 1


def _read_ply_elements(path: Path, data: bytes) -> dict[str, dict[str, object]]:
    """Parse every element; scalar properties become arrays, list properties lists of arrays."""
    fmt, elements, pos, header_lines = _parse_ply_header(path, data)
    out: dict[str, dict[str, object]] = {}
    if fmt == "ascii":
        text_lines = data[pos:].decode("ascii", errors="replace").splitlines()
        cursor = 0
        for el in elements:
            cols: dict[str, list] = {p.name: [] for p in el.properties}
            for _ in range(el.count):
                while cursor < len(text_lines) and not text_lines[cursor].strip():
                    cursor += 1
                lineno = header_lines + cursor
                if cursor >= len(text_lines):
                    raise CloudFormatError(f"file ends inside element {el.name!r}", path, line=lineno)
                tok = text_lines[cursor].split()
                cursor += 1
                k = 0
                try:
                    for p in el.properties:
                        if p.count_dtype is None:
                            cols[p.name].append(float(tok[k]))
                            k += 1
                        else:
                            n = int(tok[k])
                            if n < 0:
                                raise ValueError("negative list length")
                            cols[p.name].append(np.array([float(v) for v in tok[k + 1:k + 1 + n]]))
                            if len(cols[p.name][-1]) != n:
                                raise IndexError
                            k += 1 + n
                except IndexError:
                    raise CloudFormatError(f"too few values for element {el.name!r}", path, line=lineno) from None
                except ValueError as exc:
                    raise CloudFormatError(f"bad value in element {el.name!r}: {exc}", path, line=lineno) from None
                if k != len(tok):
                    raise CloudFormatError(f"too many values for element {el.name!r}", path, line=lineno)
            out[el.name] = {
                p.name: (np.array(cols[p.name], dtype=np.float64) if p.count_dtype is None else cols[p.name])
                for p in el.properties
            }
        return out

    for el in elements:
        if all(p.count_dtype is None for p in el.properties):
            dt = np.dtype([(p.name, "<" + p.dtype) for p in el.properties])
            nbytes = dt.itemsize * el.count
            if pos + nbytes > len(data):
                raise CloudFormatError(
                    f"binary payload truncated in element {el.name!r}: need {nbytes} bytes, "
                    f"have {len(data) - pos}", path, offset=pos)
            arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
            pos += nbytes
            out[el.name] = {p.name: arr[p.name].astype(np.float64) for p in el.properties}
            continue
        cols = {p.name: [] for p in el.properties}
        for _ in range(el.count):
            for p in el.properties:
                if p.count_dtype is None:
                    dt = np.dtype("<" + p.dtype)
                    if pos + dt.itemsize > len(data):
                        raise CloudFormatError(f"binary payload truncated in element {el.name!r}", path, offset=pos)
                    cols[p.name].append(float(np.frombuffer(data, dt, 1, pos)[0]))
                    pos += dt.itemsize
                else:
                    cdt = np.dtype("<" + p.count_dtype)
                    if pos + cdt.itemsize > len(data):
                        raise CloudFormatError(f"binary payload truncated in element {el.name!r}", path, offset=pos)
                    n = int(np.frombuffer(data, cdt, 1, pos)[0])
                    pos += cdt.itemsize
                    vdt = np.dtype("<" + p.dtype)
                    if n < 0 or pos + n * vdt.itemsize > len(data):
                        raise CloudFormatError(f"binary payload truncated in element {el.name!r}", path, offset=pos)
                    cols[p.name].append(np.frombuffer(data, vdt, n, pos).astype(np.float64))
                    pos += n * vdt.itemsize
        out[el.name] = {
            p.name: (np.array(cols[p.name], dtype=np.float64) if p.count_dtype is None else cols[p.name])
            for p in el.properties
        }
    return out


def _ply_vertices(path: Path, elements: dict) -> NDArray:
    if "vertex" not in elements:
        raise CloudFormatError("PLY has no 'vertex' element", path)
    v = elements["vertex"]
    missing = [c for c in ("x", "y", "z") if c not in v]
    if missing:
        raise CloudFormatError(f"vertex element lacks properties {missing}", path)
    for c in ("x", "y", "z"):
        if isinstance(v[c], list):
            raise CloudFormatError(f"vertex property {c!r} is a list", path)
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1) if len(v["x"]) else np.zeros((0, 3))
    if not np.all(np.isfinite(pts)):
        raise CloudFormatError("non-finite vertex coordinate", path)
    return pts


# ---------------------------------------------------------------------------
# public API


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CloudFormatError(f"cannot read file: {exc.strerror}", path) from exc


def _detect(path: Path, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    ext = path.suffix.lower().lstrip(".")
    if ext in ("xyz", "txt", "pts"):
        return "xyz"
    if ext in ("ply", "obj"):
        return ext
    raise CloudFormatError(f"cannot infer format from extension {path.suffix!r}", path)


def load_points(path: PathLike, format: str = "auto") -> NDArray[np.float64]:
    """Raw ``(N, d)`` array; may be empty."""
    p = Path(path)
    fmt = _detect(p, format)
    data = _read_bytes(p)
    if fmt == "xyz":
        return _read_xyz(p, data)
    if fmt == "ply":
        return _ply_vertices(p, _read_ply_elements(p, data))
    if fmt == "obj":
        return _read_obj(p, data)[0]
    raise CloudFormatError(f"unsupported format {fmt!r}", p)


def load_cloud(path: PathLike, format: str = "auto") -> PointCloud:
    """Load a point cloud from XYZ text or PLY (ascii / binary little-endian).

    Raises
    ------
    CloudFormatError
        For unreadable, malformed or empty files, with line or byte position
        where one is known.
    """
    pts = load_points(path, format)
    if pts.shape[0] == 0:
        raise CloudFormatError("file contains no points", path)
    return PointCloud(pts, Path(path).stem)


def write_cloud(cloud: PointCloud | NDArray, path: PathLike, format: str = "auto") -> None:
    """Write XYZ, ``ply`` (binary little-endian doubles) or ``ply-ascii``.

    Text output uses 17 significant digits so float64 values survive a round trip.
    An ``(0, 3)`` array is accepted and written as an empty file / zero-element PLY.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    p = Path(path)
    fmt = format
    if fmt == "auto":
        fmt = _detect(p, "auto")
    try:
        if fmt == "xyz":
            with open(p, "w") as fh:
                for row in pts:
                    fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        elif fmt in ("ply", "ply-binary", "ply-ascii"):
            if pts.shape[1] != 3:
                raise CloudFormatError("PLY output needs 3D points", p)
            ascii_ = fmt == "ply-ascii"
            header = (
                "ply\n"
                f"format {'ascii' if ascii_ else 'binary_little_endian'} 1.0\n"
                f"element vertex {len(pts)}\n"
                "property double x\nproperty double y\nproperty double z\n"
                "end_header\n"
            )
            with open(p, "wb") as fh:
                fh.write(header.encode("ascii"))
                if ascii_:
                    for row in pts:
                        fh.write((" ".join(f"{v:.17g}" for v in row) + "\n").encode("ascii"))
                else:
                    fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
        else:
            raise CloudFormatError(f"unsupported output format {fmt!r}", p)
    except OSError as exc:
        raise CloudFormatError(f"cannot write file: {exc.strerror}", p) from exc


# ---------------------------------------------------------------------------
# meshes


def _read_obj(path: Path, data: bytes) -> tuple[NDArray, NDArray]:
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        if tok[0] == "v":
            if len(tok) < 4:
                raise CloudFormatError("vertex needs 3 coordinates", path, line=lineno)
            try:
                xyz = [float(t) for t in tok[1:4]]
            except ValueError:
                raise CloudFormatError("non-numeric vertex coordinate", path, line=lineno) from None
            if not all(np.isfinite(xyz)):
                raise CloudFormatError("non-finite vertex coordinate", path, line=lineno)
            verts.append(xyz)
        elif tok[0] == "f":
            if len(tok) < 4:
                raise CloudFormatError("face needs at least 3 vertices", path, line=lineno)
            idx = []
            for t in tok[1:]:
                try:
                    i = int(t.split("/")[0])
                except ValueError:
                    raise CloudFormatError(f"bad face index {t!r}", path, line=lineno) from None
                # negative indices count back from the most recent vertex
                i = i - 1 if i > 0 else len(verts) + i
                if i < 0 or i >= len(verts) or t.split("/")[0] == "0":
                    raise CloudFormatError(f"face index {t!r} out of range", path, line=lineno)
                idx.append(i)
            for j in range(1, len(idx) - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return v, f


def load_mesh(path: PathLike, format: str = "auto") -> TriangleMesh:
    """Load a triangle mesh from OBJ (``v``/``f`` records) or PLY (``vertex_indices`` faces).

    Polygons are fan-triangulated; zero-area triangles are dropped and counted
    in ``dropped_faces``.
    """
    p = Path(path)
    fmt = _detect(p, format)
    data = _read_bytes(p)
    if fmt == "obj":
        v, f = _read_obj(p, data)
    elif fmt == "ply":
        elements = _read_ply_elements(p, data)
        v = _ply_vertices(p, elements)
        face = elements.get("face", {})
        lists = face.get("vertex_indices", face.get("vertex_index"))
        if lists is None or not isinstance(lists, list):
            raise CloudFormatError("PLY has no face list property", p)
        tris = []
        for n, poly in enumerate(lists):
            if len(poly) < 3:
                raise CloudFormatError(f"face {n} has fewer than 3 vertices", p)
            ids = poly.astype(np.int64)
            if ids.min() < 0 or ids.max() >= len(v):
                raise CloudFormatError(f"face {n} index out of range", p)
            for j in range(1, len(ids) - 1):
                tris.append((ids[0], ids[j], ids[j + 1]))
        f = np.array(tris, dtype=np.int64).reshape(-1, 3)
    else:
        raise CloudFormatError(f"{fmt!r} files carry no faces", p)
    mesh = TriangleMesh.from_arrays(v, f)
    if mesh.dropped_faces:
        warnings.warn(f"{p}: dropped {mesh.dropped_faces} degenerate faces", stacklevel=2)
    return mesh


def sample_mesh(mesh: TriangleMesh, n_points: int, seed: int = 0, name: str = "") -> PointCloud:
    """Uniform surface samples: area-weighted face choice, then uniform barycentrics.

    Uses a Philox (counter-based) generator keyed by ``seed``.
    """
    if len(mesh.faces) == 0:
        raise ValueError("mesh has no non-degenerate faces to sample")
    if n_points < 1:
        raise ValueError("n_points must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    area = mesh.areas()
    face = rng.choice(len(area), size=n_points, p=area / area.sum())
    r1 = np.sqrt(rng.random(n_points))
    r2 = rng.random(n_points)
    tri = mesh.vertices[mesh.faces[face]]
    pts = ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
           + (r1 * r2)[:, None] * tri[:, 2])
    return PointCloud(pts, name)
