"""Exact maximization of nonnegative-coupling quadratic pseudo-boolean
objectives via an s-t min cut.

The objective x^T M x + b^T x + c with M >= 0 rewrites as a constant minus a
cut capacity: inter-node arcs carry the couplings, and each node connects to
the source or sink according to the sign of gamma_i = b_i + sum_j M_ij.
"""

from dataclasses import dataclass

import numpy as np

from attribound import _kernels
from attribound.model import ValidationError

__all__ = [
    "QPBProblem",
    "CutGraph",
    "qpb_to_mincut",
    "min_cut",
    "qpb_maximize",
    "qpb_objective",
]

DROP_TOL = 1e-12       # capacities below this are dropped from the graph
RESIDUAL_TOL = 1e-12   # residual arcs below this count as saturated
DUALITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QPBProblem:
    """max x^T quad x + linear^T x + offset over binary x.

    ``quad`` must be nonnegative with a zero diagonal (squares are folded
    into the linear term since x_i^2 = x_i); use ``build`` to do the folding
    and symmetrization from raw coefficients.
    """

    quad: np.ndarray
    linear: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.quad, dtype=np.float64)
        b = np.asarray(self.linear, dtype=np.float64)
        object.__setattr__(self, "quad", q)
        object.__setattr__(self, "linear", b)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValidationError("quad must be square")
        if b.shape != (q.shape[0],):
            raise ValidationError("linear length must match quad")
        if q.size and q.min() < 0:
            raise ValidationError("quad couplings must be nonnegative")
        if q.size and np.any(np.diag(q) != 0.0):
            raise ValidationError("quad diagonal must be folded into linear")

    @property
    def dim(self) -> int:
        return int(self.linear.shape[0])

    @classmethod
    def build(cls, quad, linear, offset=0.0) -> "QPBProblem":
        """Symmetrize the couplings and fold the diagonal into the linear term."""
        q = np.array(quad, dtype=np.float64, copy=True)
        b = np.array(linear, dtype=np.float64, copy=True)
        q = 0.5 * (q + q.T)
        if q.size:
            b = b + np.diag(q)
            np.fill_diagonal(q, 0.0)
        return cls(quad=q, linear=b, offset=float(offset))


@dataclass(frozen=True, eq=False)
class CutGraph:
    """Capacity matrix with dedicated source/sink rows appended."""

    capacities: np.ndarray
    source: int
    sink: int
    dropped_capacity: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.capacities, dtype=np.float64)
        object.__setattr__(self, "capacities", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("capacities must be square")
        if a.size and a.min() < 0:
            raise ValidationError("capacities must be nonnegative")
        if a.size and np.any(np.diag(a) != 0.0):
            raise ValidationError("capacities must have zero diagonal")

    @property
    def size(self) -> int:
        return int(self.capacities.shape[0])


def qpb_objective(problem: QPBProblem, x) -> float:
    xv = np.asarray(x, dtype=np.float64)
    return float(xv @ problem.quad @ xv + problem.linear @ xv + problem.offset)


def qpb_to_mincut(problem: QPBProblem, drop_tol: float = DROP_TOL):
    """Transform a QPB problem into a cut graph and additive constant.

    The maximum objective equals ``constant - min_cut(graph)``.  Capacities
    below ``drop_tol`` are removed; their total is recorded on the graph so
    callers can widen derived bounds by that slack.
    """
    d = problem.dim
    gamma = problem.linear + problem.quad.sum(axis=1)
    cap = np.zeros((d + 2, d + 2))
    cap[:d, :d] = problem.quad
    source, sink = d, d + 1
    pos = gamma >= 0
    cap[source, :d][pos] = gamma[pos]
    cap[:d, sink][~pos] = -gamma[~pos]
    dropped = 0.0
    if drop_tol > 0:
        small = (cap > 0) & (cap < drop_tol)
        dropped = float(cap[small].sum())
        cap[small] = 0.0
    constant = problem.offset + float(gamma[pos].sum())
    graph = CutGraph(capacities=cap, source=source, sink=sink,
                     dropped_capacity=dropped)
    return graph, constant


def min_cut(graph: CutGraph):
    """Minimum s-t cut value and partition (True marks the source side).

    Solved by shortest-augmenting-path max flow; the returned value is the
    capacity across the final partition and is checked against the flow value
    (duality) to 1e-9.
    """
    cap = np.ascontiguousarray(graph.capacities, dtype=np.float64)
    flow, source_side = _kernels.dinic_maxflow(cap, graph.source, graph.sink,
                                               RESIDUAL_TOL)
    source_side = np.asarray(source_side, dtype=bool)
    cut_value = float(graph.capacities[np.ix_(source_side, ~source_side)].sum())
    scale = max(1.0, abs(cut_value))
    if abs(flow - cut_value) > DUALITY_TOL * scale:
        raise AssertionError(
            f"max-flow/min-cut duality violated: flow={flow}, cut={cut_value}")
    return cut_value, source_side


def qpb_maximize(problem: QPBProblem):
    """Exact maximum of the QPB objective and one maximizing assignment."""
    if problem.dim == 0:
        return problem.offset, np.zeros(0, dtype=np.int8)
    graph, constant = qpb_to_mincut(problem)
    cut_value, source_side = min_cut(graph)
    argmax = source_side[:problem.dim].astype(np.int8)
    return constant - cut_value, argmax
