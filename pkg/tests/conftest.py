import numpy as np
import pytest

from cagewarp.cage import DegenerateCageError, HexCage
from cagewarp.fields import GridField, Sphere, SphereField, TwoSpheresField


def random_valid_cage(rng, spread=0.12):
    """Unit cube perturbed until the validity gate accepts it."""
    base = HexCage.from_aabb((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    while True:
        try:
            return HexCage(base.vertices + spread * rng.standard_normal((8, 3)))
        except DegenerateCageError:
            continue


def smooth_grid_field(n=40, extent=1.2):
    """Gaussian density blob on a dense grid: Lipschitz-continuous scene."""
    axis = np.linspace(-extent, extent, n)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    r2 = gx**2 + gy**2 + gz**2
    dens = 6.0 * np.exp(-r2 / (2 * 0.35**2))
    cols = np.stack([
        0.5 + 0.5 * gx / extent,
        0.5 + 0.5 * gy / extent,
        0.5 + 0.5 * gz / extent,
    ], axis=-1) * np.clip(dens / dens.max(), 0.0, 1.0)[..., None]
    return GridField((-extent,) * 3, (extent,) * 3, dens, np.clip(cols, 0.0, 1.0))


def grid_lipschitz_bound(grid: GridField) -> float:
    """Finite-difference bound on the trilinear interpolant's gradient,
    combined over density and color channels."""
    spacing = (grid.bbox_max - grid.bbox_min) / (np.array(grid.dims) - 1)
    bound = 0.0
    for values in (grid.densities, *(grid.colors[..., c] for c in range(3))):
        per_axis = [
            np.abs(np.diff(values, axis=a)).max() / spacing[a] for a in range(3)
        ]
        bound = max(bound, float(np.linalg.norm(per_axis)))
    return bound


@pytest.fixture
def unit_cube():
    return HexCage.from_aabb((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def sphere_field():
    return SphereField(center=(0.0, 0.0, 0.0), radius=0.25,
                       color=(1.0, 1.0, 1.0), density=5.0)


@pytest.fixture
def two_spheres_field():
    return TwoSpheresField(
        Sphere((-0.5, 0.0, 0.0), 0.2, (1.0, 0.2, 0.2), 5.0),
        Sphere((0.5, 0.0, 0.0), 0.2, (0.2, 0.2, 1.0), 5.0),
    )
