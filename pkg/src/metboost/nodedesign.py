"""Tree-to-design mapping.

A fitted tree induces an N x k indicator design (one column per terminal
node) and, crossed with group membership, an N x (g*k) random-effect design
whose columns are grouped in per-group blocks of k. Only the per-row
(node, group) indices are stored; dense matrices are built on request for
small oracle checks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ParameterError

MAX_DENSE_CELLS = 2_000_000


@dataclass(frozen=True)
class NodeAssignment:
    node: np.ndarray   # terminal node index per row, 0..k-1
    group: np.ndarray  # group code per row, 0..g-1
    k: int
    g: int

    def __post_init__(self):
        if self.node.shape != self.group.shape:
            raise ParameterError("node and group vectors must align")

    @property
    def n(self) -> int:
        return self.node.shape[0]

    @property
    def cell(self) -> np.ndarray:
        """Flat (node, group) cell index ``node * g + group``."""
        return self.node * self.g + self.group

    @property
    def cell_counts(self) -> np.ndarray:
        """``(k, g)`` matrix of row counts n_ij."""
        return np.bincount(self.cell, minlength=self.k * self.g).reshape(self.k, self.g)

    @property
    def node_counts(self) -> np.ndarray:
        return np.bincount(self.node, minlength=self.k)

    def take(self, rows) -> "NodeAssignment":
        return NodeAssignment(self.node[rows], self.group[rows], self.k, self.g)


def node_design(tree, X, groups, g=None) -> NodeAssignment:
    groups = np.asarray(groups, dtype=np.int64)
    X = np.asarray(X, dtype=float)
    if groups.shape[0] != X.shape[0]:
        raise ParameterError("groups must have one entry per row of X")
    g = int(groups.max()) + 1 if g is None else int(g)
    return NodeAssignment(tree.apply(X), groups, tree.n_leaves, g)


def materialize(a: NodeAssignment, max_cells: int = MAX_DENSE_CELLS):
    """Dense ``(X_tilde, Z_tilde)``; Z_tilde column ``group * k + node``."""
    if a.n * a.k * (a.g + 1) > max_cells:
        raise CapacityError(f"dense design of {a.n} x {a.k * (a.g + 1)} exceeds {max_cells} cells")
    Xt = np.zeros((a.n, a.k))
    Xt[np.arange(a.n), a.node] = 1.0
    Zt = np.zeros((a.n, a.g * a.k))
    Zt[np.arange(a.n), a.group * a.k + a.node] = 1.0
    return Xt, Zt


def group_indicators(groups, g) -> np.ndarray:
    J = np.zeros((len(groups), g))
    J[np.arange(len(groups)), groups] = 1.0
    return J
