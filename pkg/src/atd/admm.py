"""Consensus ADMM engine for additive decomposition problems.

One copy variable is kept per penalty term.  Each iteration applies the
separable prox of every term to its copy, then projects every element's
copy vector onto the affine set "copies of a component agree, component
values sum to the data element", then updates the scaled duals.  The
projection matrix is built once per copy layout and applied to all
elements as a single contraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError
from .penalties import penalty_prox, penalty_value
from .tensor import Tensor, vec

if TYPE_CHECKING:  # pragma: no cover
    from .problems import ProblemSpec


@dataclass(frozen=True)
class CopyLayout:
    """Copy counts per component, in component-major / term-minor order."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.counts)
        if not counts or any(n < 1 for n in counts):
            raise ValidationError(
                f"every component needs at least one copy, got {counts}"
            )
        object.__setattr__(self, "counts", counts)

    @property
    def num_components(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def first_copy_rows(self) -> tuple[int, ...]:
        """Stack row of each component's first copy."""
        offsets = np.concatenate(([0], np.cumsum(self.counts)[:-1]))
        return tuple(int(o) for o in offsets)

    @property
    def component_of_copy(self) -> tuple[int, ...]:
        """Component index (0-based) owning each stack row."""
        return tuple(
            i for i, n in enumerate(self.counts) for _ in range(n)
        )


@dataclass(frozen=True)
class ConsensusProjector:
    """Precomputed projection onto one element's consensus constraints.

    ``a`` stacks the copy-equality rows (component-major) and, last, the
    row summing each component's first copy to the data element.  ``p``
    and ``q`` realize the projection of x onto {a @ y = b} as
    ``p @ x + q * m_val`` where b is m_val times the last unit vector.
    """

    layout: CopyLayout
    a: np.ndarray
    p: np.ndarray
    q: np.ndarray


def build_projector(layout: CopyLayout) -> ConsensusProjector:
    """Constraint matrix and projection data for a copy layout."""
    n = layout.total
    m = layout.num_components
    rows = n - m + 1
    a = np.zeros((rows, n))
    r = 0
    offset = 0
    for count in layout.counts:
        for j in range(count - 1):
            a[r, offset + j] = 1.0
            a[r, offset + j + 1] = -1.0
            r += 1
        offset += count
    a[rows - 1, list(layout.first_copy_rows)] = 1.0

    gram = a @ a.T
    p = np.eye(n) - a.T @ np.linalg.solve(gram, a)
    p = 0.5 * (p + p.T)
    q = a.T @ np.linalg.solve(gram, np.eye(rows)[:, -1])
    return ConsensusProjector(layout=layout, a=a, p=p, q=q)


def project_element(
    proj: ConsensusProjector, x: np.ndarray, m_val: float
) -> np.ndarray:
    """Euclidean projection of one element's copy vector onto its
    consensus set."""
    x = np.asarray(x, dtype=np.float64)
    return proj.p @ x + proj.q * float(m_val)


@dataclass
class AdmmOptions:
    """Solver controls.

    ``step3_variant`` selects what feeds the projection step: "standard"
    uses copies + duals (the convergent splitting); "paper_literal" uses
    copies - duals, kept for comparison runs.
    """

    eta: float = 0.01
    stop_tol: float = 1e-6
    max_iters: int = 5000
    step3_variant: str = "standard"

    def validate(self) -> list[str]:
        errs = []
        if not self.eta > 0:
            errs.append(f"eta must be > 0, got {self.eta}")
        if not self.stop_tol > 0:
            errs.append(f"stop_tol must be > 0, got {self.stop_tol}")
        if self.max_iters < 1:
            errs.append(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step3_variant not in ("standard", "paper_literal"):
            errs.append(f"unknown step3_variant {self.step3_variant!r}")
        return errs


@dataclass
class Solution:
    """Estimated components plus convergence diagnostics."""

    components: list[Tensor]
    iterations: int
    u_residuals: list[float]
    z_residuals: list[float]
    objective: float
    converged: bool
    objective_history: list[float] | None = None

    @property
    def component_stack(self) -> np.ndarray:
        return np.stack([c.data for c in self.components])


def objective(problem: "ProblemSpec", components: Sequence[Tensor]) -> float:
    """Weighted objective sum over all components and their terms."""
    if len(components) != len(problem.components):
        raise ValidationError(
            f"expected {len(problem.components)} components, got {len(components)}"
        )
    total = 0.0
    for comp, est in zip(problem.components, components):
        if est.dims != problem.data.dims:
            raise ValidationError(
                f"component {comp.name!r} has shape {est.dims}, "
                f"data has {problem.data.dims}"
            )
        for term in comp.terms:
            total += term.lam * penalty_value(term, est)
    return total


def admm_solve(
    problem: "ProblemSpec",
    opts: AdmmOptions | None = None,
    init_u: np.ndarray | None = None,
    init_z: np.ndarray | None = None,
    track_objective: bool = False,
) -> Solution:
    """Solve a validated decomposition problem.

    ``init_u`` / ``init_z`` override the all-zero initialization with
    arrays of shape (total copies, numel); used for uniqueness checks.
    ``track_objective`` records the weighted objective each iteration
    (costs extra penalty evaluations).
    """
    from .problems import validate

    problem = validate(problem)
    opts = opts if opts is not None else problem.options
    errs = opts.validate()
    if errs:
        raise ValidationError(errs)

    data = problem.data
    dims = data.dims
    numel = data.numel
    m_vec = vec(data)
    flat_terms = [
        (ci, term) for ci, comp in enumerate(problem.components) for term in comp.terms
    ]
    layout = CopyLayout(tuple(len(c.terms) for c in problem.components))
    proj = build_projector(layout)
    n_copies = layout.total
    first_rows = list(layout.first_copy_rows)
    reduce_mat = proj.p[first_rows, :]          # consensus value per component
    reduce_q = proj.q[first_rows]
    copy_of = list(layout.component_of_copy)    # broadcast map back to copies

    def as_stack(arr, name):
        arr = np.array(arr, dtype=np.float64)
        if arr.shape != (n_copies, numel):
            raise ValidationError(
                f"{name} must have shape {(n_copies, numel)}, got {arr.shape}"
            )
        return arr

    z = as_stack(init_z, "init_z") if init_z is not None else np.zeros((n_copies, numel))
    u = as_stack(init_u, "init_u") if init_u is not None else np.zeros((n_copies, numel))

    eta = opts.eta
    u_hist: list[float] = []
    z_hist: list[float] = []
    obj_hist: list[float] = [] if track_objective else None
    x = np.empty_like(z)
    converged = False
    iterations = 0

    for it in range(1, opts.max_iters + 1):
        iterations = it
        z_prev = z
        u_prev = u

        # separable prox per copy
        for row, (_, term) in enumerate(flat_terms):
            t_in = Tensor((z_prev[row] - u_prev[row]).reshape(dims, order="F"), copy=False)
            x[row] = vec(penalty_prox(term, t_in, eta))

        # per-element projection onto the consensus set
        if opts.step3_variant == "standard":
            pre = x + u_prev
        else:
            pre = x - u_prev
        consensus = reduce_mat @ pre + reduce_q[:, None] * m_vec[None, :]
        z = consensus[copy_of, :]

        u = u_prev + x - z

        if not np.all(np.isfinite(u)):
            raise ConvergenceError(
                f"non-finite values at iteration {it}", iteration=it
            )
        u_res = float(np.linalg.norm(u - u_prev))
        z_res = float(np.linalg.norm(z - z_prev))
        u_hist.append(u_res)
        z_hist.append(z_res)
        if track_objective:
            obj_hist.append(
                objective(
                    problem,
                    [
                        Tensor(consensus[i].reshape(dims, order="F"), copy=False)
                        for i in range(layout.num_components)
                    ],
                )
            )
        if u_res < opts.stop_tol and z_res < opts.stop_tol:
            converged = True
            break

    components = [
        Tensor(z[row].reshape(dims, order="F"), copy=True) for row in first_rows
    ]
    final_objective = objective(problem, components)
    return Solution(
        components=components,
        iterations=iterations,
        u_residuals=u_hist,
        z_residuals=z_hist,
        objective=final_objective,
        converged=converged,
        objective_history=obj_hist,
    )
