"""
Pydantic schemas for the shared numerical containers.
Radial grids and symmetric tridiagonal matrices used by every solver.
"""

from typing import Literal
import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


# ============================================================================
# Radial Grid
# ============================================================================

class RadialGrid(BaseModel):
    """Ordered radial sample points on [0, R]"""
    nodes: np.ndarray = Field(..., description="Strictly increasing radii, nodes[0] = 0")
    spacing: Literal["uniform", "geometric"] = Field("uniform", description="How the nodes are spaced")

    @field_validator('nodes', mode='before')
    @classmethod
    def coerce_nodes(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode='after')
    def check_nodes(self):
        if self.nodes.ndim != 1 or self.nodes.size < 2:
            raise ValueError('grid needs at least two nodes')
        if self.nodes[0] != 0.0:
            raise ValueError('grid must start at the center (nodes[0] = 0)')
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError('grid nodes must be strictly increasing')
        return self

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def radius(self) -> float:
        return float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @classmethod
    def uniform(cls, radius: float, n: int) -> "RadialGrid":
        """N+1 equally spaced nodes on [0, radius]"""
        return cls(nodes=np.linspace(0.0, radius, n + 1), spacing="uniform")

    @classmethod
    def geometric(cls, radius: float, n: int, ratio: float) -> "RadialGrid":
        """N+1 nodes whose spacings grow by `ratio` from the center outwards"""
        if ratio == 1.0:
            return cls.uniform(radius, n)
        k = np.arange(n + 1, dtype=float)
        nodes = radius * np.expm1(k * np.log(ratio)) / np.expm1(n * np.log(ratio))
        nodes[0] = 0.0
        nodes[-1] = radius
        return cls(nodes=nodes, spacing="geometric")

    class Config:
        arbitrary_types_allowed = True
        frozen = True


# ============================================================================
# Tridiagonal Symmetric Matrix
# ============================================================================

class TridiagonalSymmetric(BaseModel):
    """Symmetric tridiagonal matrix; only one off-diagonal is stored"""
    diagonal: np.ndarray = Field(..., description="Main diagonal, length n")
    off_diagonal: np.ndarray = Field(..., description="Sub/super diagonal, length n-1")

    @field_validator('diagonal', 'off_diagonal', mode='before')
    @classmethod
    def coerce_array(cls, v):
        return np.asarray(v, dtype=float)

    @model_validator(mode='after')
    def check_lengths(self):
        if self.off_diagonal.size != max(self.diagonal.size - 1, 0):
            raise ValueError(
                f"off-diagonal length {self.off_diagonal.size} does not match "
                f"diagonal length {self.diagonal.size}"
            )
        return self

    @property
    def size(self) -> int:
        return int(self.diagonal.size)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal * x
        y[:-1] += self.off_diagonal * x[1:]
        y[1:] += self.off_diagonal * x[:-1]
        return y

    def quadratic_form(self, x: np.ndarray) -> float:
        return float(x @ self.matvec(x))

    def shifted(self, sigma: float, other: "TridiagonalSymmetric") -> "TridiagonalSymmetric":
        """self - sigma * other"""
        return TridiagonalSymmetric(
            diagonal=self.diagonal - sigma * other.diagonal,
            off_diagonal=self.off_diagonal - sigma * other.off_diagonal,
        )

    def banded(self) -> np.ndarray:
        """(3, n) layout accepted by scipy.linalg.solve_banded with (l, u) = (1, 1)"""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.off_diagonal
        ab[1, :] = self.diagonal
        ab[2, :-1] = self.off_diagonal
        return ab

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)

    def submatrix(self, start: int) -> "TridiagonalSymmetric":
        """Trailing block obtained by dropping the first `start` rows and columns"""
        return TridiagonalSymmetric(
            diagonal=self.diagonal[start:],
            off_diagonal=self.off_diagonal[start:],
        )

    class Config:
        arbitrary_types_allowed = True
        frozen = True
