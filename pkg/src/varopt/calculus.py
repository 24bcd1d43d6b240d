"""Discrete norms, Laplacians, and the two energy functionals on a truncation.

Conventions fixed here once and used everywhere:

* Every edge-sum energy counts each undirected edge exactly once; the
  per-vertex form with a 1/2 in the gradient norm is algebraically the same
  after the double count cancels.
* In ``dirichlet`` boundary mode each base-lattice edge leaving the box is
  kept with a zero-valued phantom endpoint, so a vertex x with m dropped
  neighbour slots picks up m * |u(x)|^p in the p-Dirichlet energy and the
  matching terms in the Laplacians. In ``drop`` mode those edges vanish.
* All arithmetic is float64; tolerances are stated per check in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidExponent
from .lattice import Graph


@dataclass
class Field:
    """A real-valued function on the vertices of a graph, zero outside."""

    graph: Graph
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.graph.n,):
            raise ValueError(
                f"field has {self.values.shape} values for a graph with {self.graph.n} vertices")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def copy(self) -> "Field":
        return Field(self.graph, self.values.copy())


def as_values(field) -> np.ndarray:
    """Accept a Field or a plain array and return the value array."""
    if isinstance(field, Field):
        return field.values
    return np.asarray(field, dtype=np.float64)


@dataclass
class EnergyReport:
    """Energies of one field: p-Dirichlet sum, selected l^q norms, and the
    focusing Schrodinger energy when the exponent admits it."""

    dirichlet_p: float
    lq_norms: dict = field(default_factory=dict)
    phi: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "dirichlet_p": self.dirichlet_p,
            "lq_norms": {str(q): v for q, v in self.lq_norms.items()},
            "phi": self.phi,
        }


def lp_norm(field, p) -> float:
    """l^p norm of the field values; sup norm for p = infinity."""
    u = as_values(field)
    if p == np.inf or p == float("inf"):
        return float(np.max(np.abs(u))) if u.size else 0.0
    if p < 1:
        raise InvalidExponent(f"l^p norm needs p >= 1, got {p}")
    return float(np.sum(np.abs(u) ** p) ** (1.0 / p))


def _edge_diffs(graph: Graph, u: np.ndarray) -> np.ndarray:
    if graph.n_edges == 0:
        return np.zeros(0)
    return u[graph.edges[:, 1]] - u[graph.edges[:, 0]]


def dirichlet_energy(graph: Graph, field, p) -> float:
    """Sum of |u(x) - u(y)|^p over undirected edges (plus phantom terms in
    dirichlet mode); equals the integral of the gradient p-norm to the p."""
    if p < 1:
        raise InvalidExponent(f"Dirichlet energy needs p >= 1, got {p}")
    u = as_values(field)
    total = float(np.sum(np.abs(_edge_diffs(graph, u)) ** p))
    if graph.boundary == "dirichlet":
        total += float(np.sum(graph.phantom * np.abs(u) ** p))
    return total


def laplacian(graph: Graph, field) -> Field:
    """Graph Laplacian: (Lu)(x) = sum over neighbours y of u(y) - u(x)."""
    u = as_values(field)
    d = _edge_diffs(graph, u)
    out = (np.bincount(graph.edges[:, 0], weights=d, minlength=graph.n)
           - np.bincount(graph.edges[:, 1], weights=d, minlength=graph.n))
    if graph.boundary == "dirichlet":
        out -= graph.phantom * u
    return Field(graph, out)


def p_laplacian(graph: Graph, field, p) -> Field:
    """Graph p-Laplacian: sum over neighbours of |u(y)-u(x)|^(p-2) (u(y)-u(x)).

    Restricted to p > 1, where the edge weight |t|^(p-2) t extends
    continuously by 0 at t = 0; coincides with the Laplacian at p = 2.
    """
    if p <= 1:
        raise InvalidExponent(f"p-Laplacian needs p > 1, got {p}")
    u = as_values(field)
    d = _edge_diffs(graph, u)
    w = np.sign(d) * np.abs(d) ** (p - 1.0)
    out = (np.bincount(graph.edges[:, 0], weights=w, minlength=graph.n)
           - np.bincount(graph.edges[:, 1], weights=w, minlength=graph.n))
    if graph.boundary == "dirichlet":
        out -= graph.phantom * np.sign(u) * np.abs(u) ** (p - 1.0)
    return Field(graph, out)


def nls_energy(graph: Graph, field, p) -> float:
    """Focusing Schrodinger energy: half the 2-Dirichlet sum minus the
    l^p mass over p. Defined for p > 2."""
    if p <= 2:
        raise InvalidExponent(f"Schrodinger energy needs p > 2, got {p}")
    u = as_values(field)
    return 0.5 * dirichlet_energy(graph, u, 2) - float(np.sum(np.abs(u) ** p)) / p


def nls_gradient(graph: Graph, field, p) -> np.ndarray:
    """Euclidean gradient of nls_energy: -Lu - |u|^(p-2) u."""
    if p <= 2:
        raise InvalidExponent(f"Schrodinger energy needs p > 2, got {p}")
    u = as_values(field)
    return -laplacian(graph, u).values - np.sign(u) * np.abs(u) ** (p - 1.0)


def dirichlet_gradient(graph: Graph, field, p, eps: float = 0.0) -> np.ndarray:
    """Euclidean gradient of dirichlet_energy: p times minus the p-Laplacian.

    For p = 1 the energy is not differentiable; pass eps > 0 to use the
    smoothed weight t / sqrt(t^2 + eps^2) in place of sign(t).
    """
    u = as_values(field)
    if p > 1:
        return -p * p_laplacian(graph, u, p).values
    if eps <= 0:
        raise InvalidExponent("gradient at p = 1 needs a smoothing eps > 0")
    d = _edge_diffs(graph, u)
    w = d / np.sqrt(d * d + eps * eps)
    out = (np.bincount(graph.edges[:, 1], weights=w, minlength=graph.n)
           - np.bincount(graph.edges[:, 0], weights=w, minlength=graph.n))
    if graph.boundary == "dirichlet":
        out += graph.phantom * (u / np.sqrt(u * u + eps * eps))
    return out


def translate(field: Field, shift) -> Field:
    """Shifted field v(x) = u(x + shift) with zero extension outside the box."""
    graph = field.graph
    shift = tuple(int(c) for c in shift)
    out = np.zeros(graph.n)
    for i, x in enumerate(graph.vertices):
        j = graph.index.get(tuple(a + b for a, b in zip(x, shift)))
        if j is not None:
            out[i] = field.values[j]
    return Field(graph, out)


def energy_report(graph: Graph, field, p, q_exponents=()) -> EnergyReport:
    """Bundle the p-Dirichlet energy, requested l^q norms, and (for p > 2)
    the Schrodinger energy of one field."""
    u = as_values(field)
    phi = nls_energy(graph, u, p) if p > 2 else None
    return EnergyReport(
        dirichlet_p=dirichlet_energy(graph, u, p),
        lq_norms={q: lp_norm(u, q) for q in q_exponents},
        phi=phi,
    )
