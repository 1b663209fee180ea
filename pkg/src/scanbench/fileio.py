"""Mesh and point-cloud file I/O.

Formats:
  * OBJ (ASCII): ``v`` / ``f`` records, 1-based indices.  Faces with more
    than three vertices are triangulated as a fan from the first vertex;
    ``v/vt/vn`` slash syntax and negative (relative) indices are accepted.
  * PLY: ASCII and binary little-endian, for meshes and point clouds.

Binary PLY is the canonical interchange format: coordinates are written as
float64 little-endian, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud
from .mesh import TriMesh

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


# ---------------------------------------------------------------------------
# OBJ

def load_obj(path) -> TriMesh:
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "v":
                if len(tok) < 4:
                    raise ValueError(f"malformed vertex line: {line!r}")
                verts.append([float(tok[1]), float(tok[2]), float(tok[3])])
            elif tok[0] == "f":
                if len(tok) < 4:
                    raise ValueError(f"face with fewer than 3 vertices: {line!r}")
                idx = []
                for t in tok[1:]:
                    # v, v/vt, v//vn, v/vt/vn all start with the vertex index
                    s = t.split("/")[0]
                    i = int(s)
                    if i > 0:
                        idx.append(i - 1)
                    elif i < 0:
                        idx.append(len(verts) + i)  # relative to vertices so far
                    else:
                        raise ValueError("OBJ indices are 1-based; 0 is invalid")
                for k in range(1, len(idx) - 1):  # fan from first vertex
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise ValueError(f"no vertices in {path}")
    return TriMesh(np.asarray(verts, dtype=np.float64),
                   np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# PLY parsing helpers

def _parse_ply_header(fh):
    """Returns (format, elements) where elements is a list of
    (name, count, [(prop_name, dtype, is_list, count_dtype)])."""
    magic = fh.readline().strip()
    if magic != b"ply":
        raise ValueError("not a PLY file")
    fmt = None
    elements = []
    while True:
        raw = fh.readline()
        if not raw:
            raise ValueError("unterminated PLY header")
        tok = raw.decode("ascii", errors="replace").strip().split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1] == "ascii":
                fmt = "ascii"
            elif tok[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise ValueError(f"unsupported PLY format {tok[1]!r}")
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ValueError("property before element in PLY header")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], _PLY_TYPES[tok[3]], True, _PLY_TYPES[tok[2]]))
            else:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]], False, None))
        elif tok[0] == "end_header":
            break
    if fmt is None:
        raise ValueError("PLY header missing format line")
    return fmt, elements


def _read_ply_element_ascii(lines, count, props):
    out = {name: [] for name, _, _, _ in props}
    for _ in range(count):
        tok = next(lines).split()
        pos = 0
        for name, dt, is_list, _ in props:
            if is_list:
                n = int(tok[pos]); pos += 1
                vals = [float(x) if dt.startswith("f") else int(x) for x in tok[pos:pos + n]]
                pos += n
                out[name].append(vals)
            else:
                out[name].append(float(tok[pos]) if dt.startswith("f") else int(tok[pos]))
                pos += 1
    return out


def _read_ply_element_binary(fh, count, props):
    if not any(p[2] for p in props):  # fixed-size record: one bulk read
        dtype = np.dtype([(name, "<" + dt) for name, dt, _, _ in props])
        buf = fh.read(dtype.itemsize * count)
        if len(buf) != dtype.itemsize * count:
            raise ValueError("truncated PLY body")
        rec = np.frombuffer(buf, dtype=dtype)
        return {name: rec[name] for name, _, _, _ in props}
    out = {name: [] for name, _, _, _ in props}
    for _ in range(count):
        for name, dt, is_list, cdt in props:
            if is_list:
                n = int(np.frombuffer(fh.read(np.dtype(cdt).itemsize), dtype="<" + cdt)[0])
                out[name].append(np.frombuffer(fh.read(np.dtype(dt).itemsize * n), dtype="<" + dt))
            else:
                out[name].append(np.frombuffer(fh.read(np.dtype(dt).itemsize), dtype="<" + dt)[0])
    return out


def _load_ply(path):
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        data = {}
        if fmt == "ascii":
            body = fh.read().decode("ascii", errors="replace").splitlines()
            lines = iter(ln for ln in body if ln.strip())
            for name, count, props in elements:
                data[name] = _read_ply_element_ascii(lines, count, props)
            if next(lines, None) is not None:
                raise ValueError(f"{path}: data after the last PLY element")
        else:
            for name, count, props in elements:
                data[name] = _read_ply_element_binary(fh, count, props)
            if fh.read(1):
                raise ValueError(f"{path}: trailing bytes after the last PLY element")
    return data


def load_ply_mesh(path) -> TriMesh:
    data = _load_ply(path)
    if "vertex" not in data or "face" not in data:
        raise ValueError(f"{path}: mesh PLY needs vertex and face elements")
    v = data["vertex"]
    verts = np.column_stack([np.asarray(v["x"], dtype=np.float64),
                             np.asarray(v["y"], dtype=np.float64),
                             np.asarray(v["z"], dtype=np.float64)])
    key = "vertex_indices" if "vertex_indices" in data["face"] else "vertex_index"
    faces = []
    for poly in data["face"][key]:
        poly = list(poly)
        for k in range(1, len(poly) - 1):
            faces.append([poly[0], poly[k], poly[k + 1]])
    return TriMesh(verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_ply_mesh(mesh: TriMesh, path, binary: bool = True) -> None:
    nv, nf = len(mesh.vertices), len(mesh.faces)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {nv}",
        "property double x", "property double y", "property double z",
        f"element face {nf}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
            rec = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
            out = np.empty(nf, dtype=rec)
            out["n"] = 3
            out["i"] = mesh.faces
            fh.write(out.tobytes())
        else:
            for v in mesh.vertices:
                fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n".encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))


def load_ply_cloud(path) -> PointCloud:
    data = _load_ply(path)
    if "vertex" not in data:
        raise ValueError(f"{path}: cloud PLY needs a vertex element")
    v = data["vertex"]
    pos = np.column_stack([np.asarray(v["x"], dtype=np.float64),
                           np.asarray(v["y"], dtype=np.float64),
                           np.asarray(v["z"], dtype=np.float64)])
    normals = None
    if "nx" in v and "ny" in v and "nz" in v:
        normals = np.column_stack([np.asarray(v["nx"], dtype=np.float64),
                                   np.asarray(v["ny"], dtype=np.float64),
                                   np.asarray(v["nz"], dtype=np.float64)])
    view = None
    if "view_index" in v:
        view = np.asarray(v["view_index"], dtype=np.int64)
    return PointCloud(pos, normals=normals, view_index=view)


def save_ply_cloud(cloud: PointCloud, path, binary: bool = True) -> None:
    n = len(cloud.positions)
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    cols = [("x", cloud.positions[:, 0]), ("y", cloud.positions[:, 1]),
            ("z", cloud.positions[:, 2])]
    if cloud.normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
        cols += [("nx", cloud.normals[:, 0]), ("ny", cloud.normals[:, 1]),
                 ("nz", cloud.normals[:, 2])]
    if cloud.view_index is not None:
        if np.any(cloud.view_index < 0) or np.any(cloud.view_index > np.iinfo(np.uint32).max):
            raise ValueError("view_index out of uint32 range")
        header += ["property uint32 view_index"]
        cols += [("view_index", cloud.view_index)]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            dtype = np.dtype([(name, "<u4" if name == "view_index" else "<f8")
                              for name, _ in cols])
            out = np.empty(n, dtype=dtype)
            for name, arr in cols:
                out[name] = arr
            fh.write(out.tobytes())
        else:
            for i in range(n):
                parts = []
                for name, arr in cols:
                    parts.append(str(int(arr[i])) if name == "view_index" else repr(float(arr[i])))
                fh.write((" ".join(parts) + "\n").encode("ascii"))


def load_mesh(path) -> TriMesh:
    """Dispatch on extension: .obj or .ply."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        return load_obj(path)
    if ext == ".ply":
        return load_ply_mesh(path)
    raise ValueError(f"unsupported mesh format {ext!r}")


def save_mesh(mesh: TriMesh, path, binary: bool = True) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        save_obj(mesh, path)
    elif ext == ".ply":
        save_ply_mesh(mesh, path, binary=binary)
    else:
        raise ValueError(f"unsupported mesh format {ext!r}")
