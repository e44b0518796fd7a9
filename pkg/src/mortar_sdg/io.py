"""Legacy VTK and JSON mesh writers."""

import json

import numpy as np

from .mesh import mesh_from_dict, mesh_to_dict


def write_vtk(path, vertices, triangles, cell_data=None, title="mortar_sdg mesh"):
    """
    Legacy ASCII UNSTRUCTURED_GRID with triangle cells (type 5) and scalar
    CELL_DATA arrays; integer arrays are written as int, others as double.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    n, m = len(vertices), len(triangles)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in vertices]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            if values.shape != (m,):
                raise ValueError(f"cell array {name!r} has shape {values.shape}, expected ({m},)")
            if np.issubdtype(values.dtype, np.integer):
                lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
                lines += [str(int(v)) for v in values]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{float(v):.12g}" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_fine_vtk(path, fine, estimator=None, solution=None):
    """Fine mesh with subdomain, coarse_parent and estimator cell arrays."""
    data = {
        "subdomain": fine.subdomain.astype(int),
        "coarse_parent": fine.parent.astype(int),
        "estimator": np.zeros(fine.n_triangles) if estimator is None else np.asarray(estimator, dtype=float),
    }
    if solution is not None:
        T = np.arange(fine.n_triangles)
        c = fine.points().mean(axis=1)[:, None, :]
        data["u_centroid"] = solution.u_at(T, c)[:, 0]
        z = solution.z_at(T, c)[:, 0]
        data["zx_centroid"] = z[:, 0]
        data["zy_centroid"] = z[:, 1]
    write_vtk(path, fine.vertices, fine.triangles, data)


def write_coarse_vtk(path, coarse, indicator=None):
    d = mesh_to_dict(coarse)
    data = {
        "subdomain": np.asarray(d["subdomain"], dtype=int),
        "coarse_parent": coarse.parents().astype(int),
        "estimator": np.zeros(coarse.n_triangles) if indicator is None else np.asarray(indicator, dtype=float),
    }
    write_vtk(path, d["vertices"], d["triangles"], data)


def write_mesh_json(coarse, path):
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(coarse), fh)


def read_mesh_json(path, partition):
    with open(path) as fh:
        return mesh_from_dict(json.load(fh), partition)
