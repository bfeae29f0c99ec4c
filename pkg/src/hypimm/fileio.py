"""Line-oriented text formats ``HSURF 1``, ``HFIELD 1`` and ``HMAP 1``.

Numbers are written with 17 significant digits so files round-trip
exactly and identical inputs give byte-identical files.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .energy import EquivariantMap
from .representation import Representation
from .surface import SurfaceMesh, generator_names, surface

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def _num(x) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # no negative zero
    return f"{x:.17g}"


def _row(values) -> str:
    return " ".join(_num(v) for v in np.ravel(values))


def _lines(path_or_text) -> Iterator[str]:
    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)
    for line in io.StringIO(text):
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _expect(it, word):
    try:
        line = next(it)
    except StopIteration:
        raise FormatError(f"unexpected end of file, expected {word!r}") from None
    if not line.startswith(word):
        raise FormatError(f"expected {word!r}, got {line!r}")
    return line.split()


# --- HSURF -----------------------------------------------------------------------


def format_surface(mesh: SurfaceMesh) -> str:
    out = ["HSURF 1", f"GENUS {mesh.genus}", f"LEVEL {mesh.level}"]
    out.append(f"VERTICES {mesh.n_vertices}")
    for i, x in enumerate(mesh.vertices):
        out.append(f"{i} {_row(x)}")
    out.append(f"TRIANGLES {mesh.n_triangles}")
    for t, (tri, cw) in enumerate(zip(mesh.tri, mesh.corner_word_idx)):
        words = " ".join(_word_str(mesh.words[w]) for w in cw)
        out.append(f"{t} {tri[0]} {tri[1]} {tri[2]} {words}")
    names = generator_names(mesh.genus)
    out.append(f"PAIRINGS {len(names)}")
    for n, g in zip(names, mesh.domain.generators):
        out.append(f"{n} {_row(g)}")
    out.append(f"FRAMES {mesh.n_triangles}")
    for t, fr in enumerate(mesh.tri_frames):
        out.append(f"{t} {_row(fr.T)}")
    out.append("END")
    return "\n".join(out) + "\n"


def _word_str(word) -> str:
    """Deck word as ``k:e,k:e`` (generator index, exponent); ``e`` for the empty word."""
    return ",".join(f"{k}:{e}" for k, e in word) if word else "e"


def write_surface(mesh: SurfaceMesh, path: PathLike) -> None:
    Path(path).write_text(format_surface(mesh))


def read_surface(path_or_text, tol: float = 1e-9) -> SurfaceMesh:
    """Rebuild the mesh named in the header and check it against the file."""
    it = _lines(path_or_text)
    if next(it, None) != "HSURF 1":
        raise FormatError("not an HSURF 1 file")
    genus = int(_expect(it, "GENUS")[1])
    level = int(_expect(it, "LEVEL")[1])
    try:
        mesh = surface(genus, level)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    nv = int(_expect(it, "VERTICES")[1])
    if nv != mesh.n_vertices:
        raise FormatError("vertex count does not match the rebuilt mesh")
    X = np.array([[float(v) for v in next(it).split()[1:5]] for _ in range(nv)])
    if np.abs(X - mesh.vertices).max() > tol:
        raise FormatError("vertex coordinates do not match the rebuilt mesh")
    nt = int(_expect(it, "TRIANGLES")[1])
    tri = np.array([[int(v) for v in next(it).split()[1:4]] for _ in range(nt)])
    if tri.shape != mesh.tri.shape or (tri != mesh.tri).any():
        raise FormatError("triangles do not match the rebuilt mesh")
    ng = int(_expect(it, "PAIRINGS")[1])
    names = generator_names(genus)
    if ng != len(names):
        raise FormatError("wrong number of pairings")
    for name, g in zip(names, mesh.domain.generators):
        parts = next(it, "").split()
        if not parts or parts[0] != name or np.abs(np.array(parts[1:17], float).reshape(4, 4) - g).max() > tol * np.abs(g).max():
            raise FormatError(f"pairing {name} does not match the rebuilt domain")
    nf = int(_expect(it, "FRAMES")[1])
    if nf != mesh.n_triangles:
        raise FormatError("frame count does not match the rebuilt mesh")
    for _ in range(nf):
        next(it, None)
    _expect(it, "END")
    return mesh


# --- HFIELD ----------------------------------------------------------------------


def format_field(mesh: SurfaceMesh, phi, name: str = "phi") -> str:
    """Operator field per vertex (rep frame) or per triangle (triangle frame)."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape == (mesh.n_vertices, 2, 2):
        support = "vertex"
    elif phi.shape == (mesh.n_triangles, 2, 2):
        support = "triangle"
    else:
        raise ValueError("field must be (V, 2, 2) or (T, 2, 2)")
    out = ["HFIELD 1", f"GENUS {mesh.genus}", f"LEVEL {mesh.level}", f"NAME {name}", f"SUPPORT {support}"]
    out.append(f"RECORDS {len(phi)}")
    for i, p in enumerate(phi):
        out.append(f"{i} " + " ".join(f"{_num(z.real)} {_num(z.imag)}" for z in p.ravel()))
    out.append("END")
    return "\n".join(out) + "\n"


def write_field(mesh: SurfaceMesh, phi, path: PathLike, name: str = "phi") -> None:
    Path(path).write_text(format_field(mesh, phi, name))


def read_field(path_or_text, mesh: SurfaceMesh | None = None) -> tuple[SurfaceMesh, np.ndarray, str]:
    """Returns ``(mesh, phi, support)``; the mesh is rebuilt from the header if not given."""
    it = _lines(path_or_text)
    if next(it, None) != "HFIELD 1":
        raise FormatError("not an HFIELD 1 file")
    genus = int(_expect(it, "GENUS")[1])
    level = int(_expect(it, "LEVEL")[1])
    if mesh is None:
        mesh = surface(genus, level)
    elif (mesh.genus, mesh.level) != (genus, level):
        raise FormatError("field was written for a different surface")
    _expect(it, "NAME")
    support = _expect(it, "SUPPORT")[1]
    n = int(_expect(it, "RECORDS")[1])
    expected = {"vertex": mesh.n_vertices, "triangle": mesh.n_triangles}.get(support)
    if expected is None or n != expected:
        raise FormatError("record count does not match the surface")
    phi = np.empty((n, 2, 2), dtype=complex)
    for k in range(n):
        parts = next(it).split()
        if int(parts[0]) != k or len(parts) != 9:
            raise FormatError(f"bad record {k}")
        v = np.array([float(x) for x in parts[1:]])
        phi[k] = (v[0::2] + 1j * v[1::2]).reshape(2, 2)
    if not np.isfinite(phi).all():
        raise FormatError("non-finite entries")
    _expect(it, "END")
    return mesh, phi, support


# --- HMAP --------------------------------------------------------------------------


def format_map(f: EquivariantMap) -> str:
    m = f.mesh
    out = ["HMAP 1", f"GENUS {m.genus}", f"LEVEL {m.level}", f"VERTICES {m.n_vertices}"]
    for i, x in enumerate(f.positions):
        out.append(f"{i} {_row(x)}")
    names = f.rep.names
    out.append(f"REPRESENTATION {len(names)}")
    for n, g in zip(names, f.rep.generators):
        out.append(f"{n} {_row(g)}")
    out.append("END")
    return "\n".join(out) + "\n"


def write_map(f: EquivariantMap, path: PathLike) -> None:
    Path(path).write_text(format_map(f))


def read_map(path_or_text, mesh: SurfaceMesh | None = None) -> EquivariantMap:
    it = _lines(path_or_text)
    if next(it, None) != "HMAP 1":
        raise FormatError("not an HMAP 1 file")
    genus = int(_expect(it, "GENUS")[1])
    level = int(_expect(it, "LEVEL")[1])
    if mesh is None:
        mesh = surface(genus, level)
    elif (mesh.genus, mesh.level) != (genus, level):
        raise FormatError("map was written for a different surface")
    nv = int(_expect(it, "VERTICES")[1])
    if nv != mesh.n_vertices:
        raise FormatError("vertex count does not match the surface")
    X = np.array([[float(v) for v in next(it).split()[1:5]] for _ in range(nv)])
    ng = int(_expect(it, "REPRESENTATION")[1])
    names = generator_names(genus)
    if ng != len(names):
        raise FormatError("wrong number of generators")
    gens = {}
    for _ in range(ng):
        parts = next(it).split()
        gens[parts[0]] = np.array([float(v) for v in parts[1:17]]).reshape(4, 4)
    try:
        rep = Representation(np.array([gens[n] for n in names]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad representation block: {exc}") from exc
    _expect(it, "END")
    return EquivariantMap(mesh, rep, X)
