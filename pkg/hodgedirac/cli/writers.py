"""Legacy ASCII VTK (v2.0) and CSV emitters. Floats always use 17 significant digits."""
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from hodgedirac.services.complex import Cochain
from hodgedirac.services.mesh import SimplicialMesh
from hodgedirac.services.whitney import sample_field

logger = logging.getLogger(__name__)

VTK_TRIANGLE = 5


def _f(value: float) -> str:
    return format(float(value), ".17g")


def format_vtk(
    mesh: SimplicialMesh,
    title: str = "hodgedirac",
    point_scalars: Optional[Dict[str, np.ndarray]] = None,
    cell_scalars: Optional[Dict[str, np.ndarray]] = None,
    cell_vectors: Optional[Dict[str, np.ndarray]] = None,
) -> str:
    V, _, F = mesh.counts
    lines = ["# vtk DataFile Version 2.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {V} double")
    lines.extend(f"{_f(x)} {_f(y)} 0" for x, y in mesh.vertices)
    lines.append(f"CELLS {F} {4 * F}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {F}")
    lines.extend([str(VTK_TRIANGLE)] * F)

    if point_scalars:
        lines.append(f"POINT_DATA {V}")
        for name, values in point_scalars.items():
            lines.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
            lines.extend(_f(v) for v in values)
    if cell_scalars or cell_vectors:
        lines.append(f"CELL_DATA {F}")
        for name, values in (cell_scalars or {}).items():
            lines.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
            lines.extend(_f(v) for v in values)
        for name, values in (cell_vectors or {}).items():
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{_f(a)} {_f(b)} 0" for a, b in values)
    return "\n".join(lines) + "\n"


def cochain_fields(x: Cochain, prefix: str = "u") -> dict:
    """keyword arguments for format_vtk carrying the three degrees of a cochain."""
    mesh, bc = x.complex.mesh, x.complex.bc
    return {
        "point_scalars": {f"{prefix}0": sample_field(mesh, 0, x.component(0), bc)},
        "cell_vectors": {f"{prefix}1": sample_field(mesh, 1, x.component(1), bc)},
        "cell_scalars": {f"{prefix}2": sample_field(mesh, 2, x.component(2), bc)},
    }


def merge_fields(*field_sets: dict) -> dict:
    merged = {"point_scalars": {}, "cell_vectors": {}, "cell_scalars": {}}
    for fields in field_sets:
        for key, values in fields.items():
            merged[key].update(values)
    return merged


def write_text(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="ascii")
    logger.info(f"Wrote {path} ({len(text)} bytes)")
    return path


def write_vtk(path: Union[str, Path], mesh: SimplicialMesh, title: str = "hodgedirac", **fields) -> Path:
    return write_text(path, format_vtk(mesh, title, **fields))
