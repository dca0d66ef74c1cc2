import numpy as np
import pytest

from lhsurf.parameterize import TriMesh


def structured_mesh(xs, ys, height=None):
    """Triangulated structured grid over xs x ys with optional height map."""
    X, Y = np.meshgrid(xs, ys)
    Z = np.zeros_like(X) if height is None else height(X, Y)
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
    nx, ny = len(xs) - 1, len(ys) - 1

    def vid(i, j):
        return j * (nx + 1) + i

    faces = []
    for j in range(ny):
        for i in range(nx):
            faces.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            faces.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    corners = np.array([vid(0, 0), vid(nx, 0), vid(nx, ny), vid(0, ny)])
    return verts, np.asarray(faces), corners


def rect_mesh(width, height, nx, ny):
    verts, faces, corners = structured_mesh(
        np.linspace(0.0, width, nx + 1), np.linspace(0.0, height, ny + 1)
    )
    return TriMesh(verts, faces, corners)


def half_cylinder_mesh(radius, length, n_theta, n_z):
    th = np.linspace(0.0, np.pi, n_theta + 1)
    zs = np.linspace(0.0, length, n_z + 1)
    TH, ZS = np.meshgrid(th, zs)
    verts = np.stack(
        [radius * np.cos(TH).ravel(), radius * np.sin(TH).ravel(), ZS.ravel()], axis=-1
    )
    _, faces, corners = structured_mesh(th, zs)
    return TriMesh(verts, faces, corners)


def erode(mask_bool, steps):
    comp = ~mask_bool
    for _ in range(steps):
        grown = comp.copy()
        grown[1:, :] |= comp[:-1, :]
        grown[:-1, :] |= comp[1:, :]
        grown[:, 1:] |= comp[:, :-1]
        grown[:, :-1] |= comp[:, 1:]
        comp = grown
    return ~comp & mask_bool


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
