"""Mesh readers and writers for OBJ, PLY and glTF/GLB."""
from __future__ import annotations

import base64
import json
import struct
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement

from ..errors import IoError, ParseError, UnsupportedFace
from ..geometry import TriMesh

FLOAT_FMT = "%.17g"


def _faces_to_triangles(faces: list[list[int]]) -> list[list[int]]:
    tris: list[list[int]] = []
    for f in faces:
        if len(f) == 3:
            tris.append(f)
        elif len(f) == 4:
            tris.append([f[0], f[1], f[2]])
            tris.append([f[0], f[2], f[3]])
        elif len(f) < 3:
            raise ParseError(f"face with {len(f)} vertices")
        else:
            raise UnsupportedFace(f"{len(f)}-gon faces are not supported; triangulate first")
    return tris


def _to_uint8(colors: np.ndarray) -> np.ndarray:
    colors = np.asarray(colors, dtype=np.float64)
    if colors.size and colors.max() > 1.0:
        return np.clip(np.rint(colors), 0, 255).astype(np.uint8)
    return np.clip(np.rint(colors * 255.0), 0, 255).astype(np.uint8)


def _make_mesh(vertices, triangles, **attrs) -> TriMesh:
    try:
        return TriMesh(vertices, triangles, **attrs)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# --- OBJ -------------------------------------------------------------------

def _obj_index(token: str, count: int) -> int:
    i = int(token)
    return i - 1 if i > 0 else count + i


def _read_mtl_texture(mtl_path: Path) -> str | None:
    if not mtl_path.exists():
        return None
    for line in mtl_path.read_text(errors="replace").splitlines():
        parts = line.split()
        if parts and parts[0] == "map_Kd" and len(parts) > 1:
            return str((mtl_path.parent / parts[-1]).resolve())
    return None


def load_obj(path: Path) -> TriMesh:
    verts, colors, uvs, normals = [], [], [], []
    corners: list[list[tuple[int, int, int]]] = []
    texture = None
    try:
        text = path.read_text(errors="replace")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) >= 7:
                    colors.append([float(x) for x in parts[4:7]])
            elif tag == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif tag == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                face = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi = _obj_index(fields[0], len(verts))
                    ti = _obj_index(fields[1], len(uvs)) if len(fields) > 1 and fields[1] else -1
                    ni = _obj_index(fields[2], len(normals)) if len(fields) > 2 and fields[2] else -1
                    face.append((vi, ti, ni))
                corners.append(face)
            elif tag == "mtllib" and len(parts) > 1:
                texture = _read_mtl_texture(path.parent / parts[1]) or texture
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not verts:
        raise ParseError(f"{path}: no vertices")
    if colors and len(colors) != len(verts):
        colors = []
    flat = [c for face in corners for c in face]
    if not flat:
        raise ParseError(f"{path}: no faces")
    keys = np.array(flat, dtype=np.int64)
    if keys[:, 0].min() < 0 or keys[:, 0].max() >= len(verts):
        raise ParseError(f"{path}: face references a missing vertex")
    has_t = bool(uvs) and bool((keys[:, 1] >= 0).all())
    has_n = bool(normals) and bool((keys[:, 2] >= 0).all())
    split = (has_t and np.any(keys[:, 1] != keys[:, 0])) or (has_n and np.any(keys[:, 2] != keys[:, 0]))
    v = np.array(verts, dtype=np.float64)
    col = _to_uint8(np.array(colors)) if colors else None
    if split:
        cols = [0] + ([1] if has_t else []) + ([2] if has_n else [])
        uniq, first, inverse = np.unique(keys[:, cols], axis=0, return_index=True, return_inverse=True)
        # keep first-appearance order
        rank = np.argsort(np.argsort(first))
        remap = rank[inverse.ravel()]
        uniq = uniq[np.argsort(first)]
        vi = uniq[:, 0]
        out_v = v[vi]
        out_c = None if col is None else col[vi]
        out_t = np.array(uvs, dtype=np.float64)[uniq[:, 1]] if has_t else None
        out_n = np.array(normals, dtype=np.float64)[uniq[:, -1]] if has_n else None
        idx = remap
    else:
        out_v, out_c = v, col
        out_t = np.array(uvs, dtype=np.float64)[: len(v)] if has_t and len(uvs) >= len(v) else None
        out_n = np.array(normals, dtype=np.float64)[: len(v)] if has_n and len(normals) >= len(v) else None
        idx = keys[:, 0]
    faces, pos = [], 0
    for face in corners:
        faces.append([int(i) for i in idx[pos:pos + len(face)]])
        pos += len(face)
    tris = _faces_to_triangles(faces)
    return _make_mesh(out_v, np.array(tris, dtype=np.int64).reshape(-1, 3),
                      normals=out_n, colors=out_c, uvs=out_t, texture_path=texture)


def save_obj(mesh: TriMesh, path: Path) -> None:
    lines = []
    for k, p in enumerate(mesh.vertices):
        row = "v " + " ".join(FLOAT_FMT % x for x in p)
        if mesh.colors is not None:
            row += " " + " ".join(FLOAT_FMT % (c / 255.0) for c in mesh.colors[k])
        lines.append(row)
    if mesh.uvs is not None:
        lines.extend("vt " + " ".join(FLOAT_FMT % x for x in uv) for uv in mesh.uvs)
    if mesh.normals is not None:
        lines.extend("vn " + " ".join(FLOAT_FMT % x for x in n) for n in mesh.normals)
    for t in mesh.triangles + 1:
        if mesh.uvs is not None and mesh.normals is not None:
            lines.append("f " + " ".join(f"{i}/{i}/{i}" for i in t))
        elif mesh.uvs is not None:
            lines.append("f " + " ".join(f"{i}/{i}" for i in t))
        elif mesh.normals is not None:
            lines.append("f " + " ".join(f"{i}//{i}" for i in t))
        else:
            lines.append("f %d %d %d" % tuple(t))
    path.write_text("\n".join(lines) + "\n")


# --- PLY -------------------------------------------------------------------

def load_ply(path: Path) -> TriMesh:
    try:
        ply = PlyData.read(str(path))
        vert = ply["vertex"].data
    except Exception as exc:  # plyfile raises a variety of types
        raise ParseError(f"{path}: {exc}") from exc
    names = vert.dtype.names
    v = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(np.float64)
    normals = colors = uvs = None
    if {"nx", "ny", "nz"} <= set(names):
        normals = np.stack([vert["nx"], vert["ny"], vert["nz"]], axis=1).astype(np.float64)
    if {"red", "green", "blue"} <= set(names):
        rgb = np.stack([vert["red"], vert["green"], vert["blue"]], axis=1)
        colors = rgb.astype(np.uint8) if rgb.dtype == np.uint8 else _to_uint8(rgb)
    for u_name, v_name in (("s", "t"), ("u", "v"), ("texture_u", "texture_v")):
        if {u_name, v_name} <= set(names):
            uvs = np.stack([vert[u_name], vert[v_name]], axis=1).astype(np.float64)
            break
    try:
        face = ply["face"].data
    except KeyError:
        raise ParseError(f"{path}: no face element") from None
    key = "vertex_indices" if "vertex_indices" in face.dtype.names else "vertex_index"
    faces = [list(map(int, f)) for f in face[key]]
    tris = _faces_to_triangles(faces)
    return _make_mesh(v, np.array(tris, dtype=np.int64).reshape(-1, 3),
                      normals=normals, colors=colors, uvs=uvs)


def save_ply(mesh: TriMesh, path: Path) -> None:
    fields = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if mesh.normals is not None:
        fields += [("nx", "f8"), ("ny", "f8"), ("nz", "f8")]
    if mesh.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if mesh.uvs is not None:
        fields += [("s", "f8"), ("t", "f8")]
    data = np.empty(mesh.n_vertices, dtype=fields)
    data["x"], data["y"], data["z"] = mesh.vertices.T
    if mesh.normals is not None:
        data["nx"], data["ny"], data["nz"] = mesh.normals.T
    if mesh.colors is not None:
        data["red"], data["green"], data["blue"] = mesh.colors.T
    if mesh.uvs is not None:
        data["s"], data["t"] = mesh.uvs.T
    faces = np.empty(mesh.n_triangles, dtype=[("vertex_indices", "i4", (3,))])
    faces["vertex_indices"] = mesh.triangles
    PlyData([PlyElement.describe(data, "vertex"), PlyElement.describe(faces, "face")]).write(str(path))


# --- glTF ------------------------------------------------------------------

_COMPONENT = {5120: np.int8, 5121: np.uint8, 5122: np.int16, 5123: np.uint16, 5125: np.uint32, 5126: np.float32}
_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


def _read_gltf_document(path: Path) -> tuple[dict, list[bytes]]:
    raw = path.read_bytes()
    bin_chunk = None
    if raw[:4] == b"glTF":
        _, version, _ = struct.unpack_from("<4sII", raw, 0)
        if version != 2:
            raise ParseError(f"{path}: unsupported glTF version {version}")
        off, doc = 12, None
        while off < len(raw):
            length, ctype = struct.unpack_from("<II", raw, off)
            chunk = raw[off + 8: off + 8 + length]
            if ctype == 0x4E4F534A:
                doc = json.loads(chunk.decode("utf-8"))
            elif ctype == 0x004E4942:
                bin_chunk = chunk
            off += 8 + length
        if doc is None:
            raise ParseError(f"{path}: GLB without JSON chunk")
    else:
        doc = json.loads(raw.decode("utf-8"))
    buffers = []
    for k, buf in enumerate(doc.get("buffers", [])):
        uri = buf.get("uri")
        if uri is None:
            if bin_chunk is None:
                raise ParseError(f"{path}: buffer {k} has no data")
            buffers.append(bin_chunk)
        elif uri.startswith("data:"):
            buffers.append(base64.b64decode(uri.split(",", 1)[1]))
        else:
            buffers.append((path.parent / uri).read_bytes())
    return doc, buffers


def _accessor(doc: dict, buffers: list[bytes], index: int) -> np.ndarray:
    acc = doc["accessors"][index]
    if "sparse" in acc:
        raise ParseError("sparse accessors are not supported")
    dtype = np.dtype(_COMPONENT[acc["componentType"]]).newbyteorder("<")
    width = _WIDTH[acc["type"]]
    count = acc["count"]
    if "bufferView" not in acc:
        return np.zeros((count, width), dtype=dtype)
    view = doc["bufferViews"][acc["bufferView"]]
    data = buffers[view["buffer"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    item = dtype.itemsize * width
    stride = view.get("byteStride", item)
    if stride == item:
        out = np.frombuffer(data, dtype=dtype, count=count * width, offset=start).reshape(count, width)
    else:
        rows = [np.frombuffer(data, dtype=dtype, count=width, offset=start + k * stride) for k in range(count)]
        out = np.stack(rows) if rows else np.zeros((0, width), dtype=dtype)
    if acc.get("normalized") and dtype.kind in "iu":
        out = out.astype(np.float64) / np.iinfo(dtype).max
    return out


def _node_matrix(node: dict) -> np.ndarray:
    if "matrix" in node:
        return np.array(node["matrix"], dtype=np.float64).reshape(4, 4).T
    t = np.array(node.get("translation", [0, 0, 0]), dtype=np.float64)
    x, y, z, w = node.get("rotation", [0, 0, 0, 1])
    s = np.array(node.get("scale", [1, 1, 1]), dtype=np.float64)
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    m = np.eye(4)
    m[:3, :3] = r * s
    m[:3, 3] = t
    return m


def load_gltf(path: Path) -> TriMesh:
    try:
        doc, buffers = _read_gltf_document(path)
    except (OSError, ValueError, struct.error, KeyError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    instances: list[tuple[int, np.ndarray]] = []
    scenes = doc.get("scenes")
    if scenes:
        scene = scenes[doc.get("scene", 0)]
        nodes = doc.get("nodes", [])

        def visit(idx: int, parent: np.ndarray) -> None:
            node = nodes[idx]
            m = parent @ _node_matrix(node)
            if "mesh" in node:
                instances.append((node["mesh"], m))
            for child in node.get("children", []):
                visit(child, m)

        for root in scene.get("nodes", []):
            visit(root, np.eye(4))
    else:
        instances = [(k, np.eye(4)) for k in range(len(doc.get("meshes", [])))]
    pieces = []
    try:
        for mesh_idx, m in instances:
            for prim in doc["meshes"][mesh_idx]["primitives"]:
                if prim.get("mode", 4) != 4:
                    raise UnsupportedFace(f"{path}: primitive mode {prim.get('mode')} is not triangles")
                attrs = prim["attributes"]
                pos = _accessor(doc, buffers, attrs["POSITION"]).astype(np.float64)
                pos = pos @ m[:3, :3].T + m[:3, 3]
                if "indices" in prim:
                    idx = _accessor(doc, buffers, prim["indices"]).astype(np.int64).reshape(-1, 3)
                else:
                    idx = np.arange(len(pos), dtype=np.int64).reshape(-1, 3)
                nrm = col = uv = None
                if "NORMAL" in attrs:
                    nrm = _accessor(doc, buffers, attrs["NORMAL"]).astype(np.float64) @ np.linalg.inv(m[:3, :3])
                    nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-300)
                if "COLOR_0" in attrs:
                    raw = _accessor(doc, buffers, attrs["COLOR_0"])[:, :3]
                    col = raw.astype(np.uint8) if raw.dtype == np.uint8 else _to_uint8(raw)
                if "TEXCOORD_0" in attrs:
                    uv = _accessor(doc, buffers, attrs["TEXCOORD_0"]).astype(np.float64)
                pieces.append((pos, idx, nrm, col, uv))
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: {exc}") from exc
    if not pieces:
        raise ParseError(f"{path}: no mesh primitives")
    offsets = np.cumsum([0] + [len(p[0]) for p in pieces[:-1]])

    def gather(k):
        vals = [p[k] for p in pieces]
        return None if any(v is None for v in vals) else np.concatenate(vals)

    return _make_mesh(
        np.concatenate([p[0] for p in pieces]),
        np.concatenate([p[1] + o for p, o in zip(pieces, offsets)]),
        normals=gather(2), colors=gather(3), uvs=gather(4),
    )


def save_glb(mesh: TriMesh, path: Path) -> None:
    """Write a single-primitive GLB (positions, indices, optional colors)."""
    blobs, views, accessors = [], [], []
    offset = 0

    def add(arr: np.ndarray, ctype: int, atype: str, target: int, minmax: bool = False) -> int:
        nonlocal offset
        data = np.ascontiguousarray(arr).tobytes()
        pad = (-len(data)) % 4
        views.append({"buffer": 0, "byteOffset": offset, "byteLength": len(data), "target": target})
        acc = {"bufferView": len(views) - 1, "componentType": ctype, "count": len(arr), "type": atype}
        if minmax:
            acc["min"] = arr.min(axis=0).tolist()
            acc["max"] = arr.max(axis=0).tolist()
        accessors.append(acc)
        blobs.append(data + b"\0" * pad)
        offset += len(data) + pad
        return len(accessors) - 1

    attrs = {"POSITION": add(mesh.vertices.astype(np.float32), 5126, "VEC3", 34962, True)}
    if mesh.colors is not None:
        attrs["COLOR_0"] = add(mesh.colors.astype(np.uint8), 5121, "VEC3", 34962)
        accessors[-1]["normalized"] = True
    ind = add(mesh.triangles.astype(np.uint32).ravel(), 5125, "SCALAR", 34963)
    doc = {
        "asset": {"version": "2.0"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{"attributes": attrs, "indices": ind, "mode": 4}]}],
        "buffers": [{"byteLength": offset}],
        "bufferViews": views,
        "accessors": accessors,
    }
    js = json.dumps(doc, separators=(",", ":")).encode("utf-8")
    js += b" " * ((-len(js)) % 4)
    binary = b"".join(blobs)
    total = 12 + 8 + len(js) + 8 + len(binary)
    out = struct.pack("<4sII", b"glTF", 2, total)
    out += struct.pack("<II", len(js), 0x4E4F534A) + js
    out += struct.pack("<II", len(binary), 0x004E4942) + binary
    path.write_bytes(out)


_LOADERS = {".obj": load_obj, ".ply": load_ply, ".glb": load_gltf, ".gltf": load_gltf}


def load_mesh(path) -> TriMesh:
    path = Path(path)
    loader = _LOADERS.get(path.suffix.lower())
    if loader is None:
        raise ParseError(f"unsupported mesh extension {path.suffix!r}")
    if not path.is_file():
        raise ParseError(f"no such mesh file: {path}")
    return loader(path)


def save_mesh(mesh: TriMesh, path) -> Path:
    path = Path(path)
    writers = {".obj": save_obj, ".ply": save_ply, ".glb": save_glb}
    writer = writers.get(path.suffix.lower())
    if writer is None:
        raise ParseError(f"cannot write mesh format {path.suffix!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(mesh, path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path
