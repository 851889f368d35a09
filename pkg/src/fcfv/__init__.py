"""Second-order face-centred finite volumes for Poisson and Stokes problems."""
from .mesh import CellType, Mesh, MeshError, DegenerateCellError, Tag
from .geometry import MeshGeometry, compute_geometry
from .generators import generate_structured_mesh
from .poisson import PoissonProblem, PoissonSolution, solve_poisson
from .stokes import StokesProblem, StokesSolution, solve_stokes
from .linsys import SingularSystemError

__version__ = "0.1.0"

__all__ = [
    "CellType",
    "Mesh",
    "MeshError",
    "DegenerateCellError",
    "Tag",
    "MeshGeometry",
    "compute_geometry",
    "generate_structured_mesh",
    "PoissonProblem",
    "PoissonSolution",
    "solve_poisson",
    "StokesProblem",
    "StokesSolution",
    "solve_stokes",
    "SingularSystemError",
]
