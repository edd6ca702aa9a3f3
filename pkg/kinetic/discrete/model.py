from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from kinetic.config import settings
from kinetic.core.exceptions import ModelError


class DiscreteState(BaseModel):
    """f[i, j] = f_ij(t); n_i is the plain sum over states."""

    t: float
    f: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("f", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        array = np.array(value, dtype=float)
        if array.ndim == 1:
            array = array[None, :]
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self):
        if self.f.ndim != 2:
            raise ValueError(f"f must be a matrix, got shape {self.f.shape}")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("f must be finite")
        if np.any(self.f < -1e-12):
            raise ValueError("f must be nonnegative")
        return self


class DiscreteModel(BaseModel):
    """Dense interaction tables of the discrete-activity structure.

    Index orders (p, h, i subsystems; q, k, j states):
        eta[p, q, h, k]        A[p, q, h, k, i, j]
        mu[p, q, k]            M[p, q, k, i, j]   (k is a subsystem here)
        P[i, j, h, k]          D[i, j, h, k]
    density_scaling(f) multiplies eta and mu when given.
    """

    n: int
    m: int
    nodes: np.ndarray
    eta: np.ndarray
    A: np.ndarray
    mu: np.ndarray
    M: np.ndarray
    P: np.ndarray
    D: np.ndarray
    density_scaling: Optional[Callable[[np.ndarray], float]] = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def is_conservative(self) -> bool:
        return not (np.any(self.P) or np.any(self.D))

    @classmethod
    def build(
        cls,
        n: int,
        m: int,
        nodes=None,
        eta=None,
        A=None,
        mu=None,
        M=None,
        P=None,
        D=None,
        density_scaling=None,
    ) -> "DiscreteModel":
        """Fill missing tables and validate.

        A and M default to the identity transition; eta, mu, P and D to zero.
        Nodes default to m equally spaced activity values on [0, 1].
        """
        nodes = np.linspace(0.0, 1.0, m) if nodes is None else np.asarray(nodes, dtype=float)
        tables = {
            "eta": _table(eta, (n, m, n, m)),
            "A": _table(A, (n, m, n, m, n, m), default=identity_transition(n, m)),
            "mu": _table(mu, (n, m, n)),
            "M": _table(M, (n, m, n, n, m), default=identity_macro_transition(n, m)),
            "P": _table(P, (n, m, n, m)),
            "D": _table(D, (n, m, n, m)),
        }
        validate_tables(n, m, nodes, **tables)
        return cls(n=n, m=m, nodes=nodes, density_scaling=density_scaling, **tables)


def _table(value, shape, default=None) -> np.ndarray:
    if value is None:
        return np.zeros(shape) if default is None else default
    array = np.array(value, dtype=float)
    if array.shape != shape:
        raise ModelError(f"table has shape {array.shape}, expected {shape}")
    return array


def identity_transition(n: int, m: int) -> np.ndarray:
    A = np.zeros((n, m, n, m, n, m))
    for p in range(n):
        for q in range(m):
            A[p, q, :, :, p, q] = 1.0
    return A


def identity_macro_transition(n: int, m: int) -> np.ndarray:
    M = np.zeros((n, m, n, n, m))
    for p in range(n):
        for q in range(m):
            M[p, q, :, p, q] = 1.0
    return M


def validate_tables(n: int, m: int, nodes: np.ndarray, eta, A, mu, M, P, D) -> None:
    tolerance = settings.DISCRETE_NORMALIZATION_TOLERANCE
    if nodes.shape != (m,) or np.any(np.diff(nodes) <= 0):
        raise ModelError(f"nodes must be {m} strictly increasing activity values")
    for name, table in (("eta", eta), ("A", A), ("mu", mu), ("M", M), ("P", P), ("D", D)):
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ModelError(f"table {name} must be finite and nonnegative")

    a_error = np.max(np.abs(A.sum(axis=(4, 5)) - 1.0))
    if a_error > tolerance:
        raise ModelError(f"A rows must sum to 1 over (i, j); worst error {a_error:.3g}")
    m_error = np.max(np.abs(M.sum(axis=(3, 4)) - 1.0))
    if m_error > tolerance:
        raise ModelError(f"M rows must sum to 1 over (i, j); worst error {m_error:.3g}")
    if np.any(mu) and nodes[0] < 0:
        raise ModelError("micro-macro coupling weights encounters by E_k and needs nonnegative activity values")
