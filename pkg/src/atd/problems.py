"""Declarative decomposition problems and the canned configurations.

A problem is the data tensor plus an ordered list of named components,
each carrying penalty terms.  ``validate`` normalizes a problem (splits
multi-mode smoothness terms so every solver copy owns one mode, injects
the ridge term) and reports *all* violations at once.

The canned builders reproduce the standard setups: the crack study
(smooth background + temporally smooth sparse crack), the hotspot study
(smooth low-rank background + static and moving hotspots), the
calcification extraction setup, and the SSD / RPCA baselines expressed in
the same vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .admm import AdmmOptions
from .errors import ValidationError
from .penalties import (
    LOW_RANK,
    SMOOTHNESS,
    SPARSITY,
    SQUARED_FROBENIUS,
    PenaltyTerm,
    check_term,
    has_prox,
    smoothness_specs,
)
from .tensor import Tensor


@dataclass(eq=True)
class Component:
    """One additive component: a name and its penalty terms."""

    name: str
    terms: list[PenaltyTerm] = field(default_factory=list)


@dataclass(eq=True)
class ProblemSpec:
    """Data tensor, components, ridge weight, and solver options."""

    data: Tensor
    components: list[Component]
    ridge_eps: float = 0.0
    options: AdmmOptions = field(default_factory=AdmmOptions)


def validate(spec: ProblemSpec) -> ProblemSpec:
    """Normalized copy of `spec`, or :class:`ValidationError` listing every
    violation.

    Normalization splits each multi-mode smoothness term into per-mode
    terms (one solver copy per mode) and, when ``ridge_eps > 0``, appends a
    squared-Frobenius term with that weight to every component.  The
    function is idempotent.
    """
    errs: list[str] = []
    order = spec.data.order
    if not spec.components:
        errs.append("problem needs at least one component")
    if spec.ridge_eps < 0:
        errs.append(f"ridge_eps must be >= 0, got {spec.ridge_eps}")
    errs.extend(spec.options.validate())

    components: list[Component] = []
    any_positive = spec.ridge_eps > 0
    for ci, comp in enumerate(spec.components, start=1):
        terms: list[PenaltyTerm] = []
        for ti, term in enumerate(comp.terms, start=1):
            path = f"component {ci} ({comp.name!r}) term {ti}"
            term_errs = check_term(term, order, path)
            errs.extend(term_errs)
            if term_errs:
                continue
            if not has_prox(term):
                errs.append(
                    f"{path}: no prox available for graph-neighborhood "
                    "piecewise constancy (evaluation only)"
                )
                continue
            if term.lam > 0:
                any_positive = True
            if term.kind == SMOOTHNESS and len(term.modes) > 1:
                for mode, diff_order, boundary in smoothness_specs(term):
                    terms.append(
                        replace(
                            term,
                            modes=(mode,),
                            order=diff_order,
                            boundary=boundary,
                        )
                    )
            else:
                terms.append(replace(term))
        if spec.ridge_eps > 0:
            terms.append(PenaltyTerm(SQUARED_FROBENIUS, spec.ridge_eps))
        if not terms:
            errs.append(
                f"component {ci} ({comp.name!r}) has no penalty term "
                "(and no ridge to fall back on)"
            )
        components.append(Component(comp.name, terms))

    if spec.components and not any_positive and not errs:
        errs.append("at least one penalty weight must be > 0")
    if errs:
        raise ValidationError(errs)
    return ProblemSpec(
        data=spec.data,
        components=components,
        ridge_eps=0.0,  # folded into the injected terms
        options=replace(spec.options),
    )


def _require_order3(data: Tensor, what: str) -> None:
    if data.order != 3:
        raise ValidationError(
            f"{what} expects an order-3 tensor (images stacked on mode 1), "
            f"got order {data.order}"
        )


def crack_problem(
    data: Tensor,
    lam11: float = 1.0,
    lam12: float = 1.0,
    lam21: float = 10.0,
    lam22: float = 0.08,
    eta: float = 0.01,
    **options,
) -> ProblemSpec:
    """Smooth background + growing crack decomposition of an image stack.

    Background: first-order smoothness inside each image (modes 2 and 3).
    Crack: second-order Neumann smoothness across images (mode 1) plus an
    elementwise l1 penalty.  Copy layout (2, 2).
    """
    _require_order3(data, "crack_problem")
    background = Component(
        "background",
        [
            PenaltyTerm(SMOOTHNESS, lam11, modes=(2,), order=1),
            PenaltyTerm(SMOOTHNESS, lam12, modes=(3,), order=1),
        ],
    )
    crack = Component(
        "crack",
        [
            PenaltyTerm(SMOOTHNESS, lam21, modes=(1,), order=2, boundary="neumann"),
            PenaltyTerm(SPARSITY, lam22),
        ],
    )
    return ProblemSpec(data, [background, crack], options=AdmmOptions(eta=eta, **options))


def hotspot_problem(
    data: Tensor,
    lam11: float = 30.0,
    lam12: float = 30.0,
    lam13: float = 1.0,
    lam21: float = 1.0,
    lam22: float = 1.9,
    lam31: float = 2.0,
    eta: float = 0.01,
    **options,
) -> ProblemSpec:
    """Background / static-hotspot / moving-hotspot split of an image stack.

    Background: in-image smoothness plus low rank across images; static
    hotspots: low rank across images plus l1; moving hotspots: l1.  Copy
    layout (3, 2, 1).
    """
    _require_order3(data, "hotspot_problem")
    background = Component(
        "background",
        [
            PenaltyTerm(SMOOTHNESS, lam11, modes=(2,), order=1),
            PenaltyTerm(SMOOTHNESS, lam12, modes=(3,), order=1),
            PenaltyTerm(LOW_RANK, lam13, modes=(1,)),
        ],
    )
    static = Component(
        "static_hotspot",
        [
            PenaltyTerm(LOW_RANK, lam21, modes=(1,)),
            PenaltyTerm(SPARSITY, lam22),
        ],
    )
    moving = Component("moving_hotspot", [PenaltyTerm(SPARSITY, lam31)])
    return ProblemSpec(
        data, [background, static, moving], options=AdmmOptions(eta=eta, **options)
    )


def avc_problem(
    data: Tensor,
    lam11: float = 10.0,
    lam21: float = 0.7,
    lam22: float = 0.16,
    lam31: float = 1.0,
    eta: float = 0.01,
    **options,
) -> ProblemSpec:
    """Background / calcification / noise split of a CT image stack.

    One shared weight smooths the background inside each image; the
    calcification component is smooth across images (first order) and
    sparse; the noise component carries a squared-Frobenius penalty.  Copy
    layout (2, 2, 1).
    """
    _require_order3(data, "avc_problem")
    background = Component(
        "background",
        [PenaltyTerm(SMOOTHNESS, lam11, modes=(2, 3), order=1)],
    )
    calcification = Component(
        "calcification",
        [
            PenaltyTerm(SMOOTHNESS, lam21, modes=(1,), order=1),
            PenaltyTerm(SPARSITY, lam22),
        ],
    )
    noise = Component("noise", [PenaltyTerm(SQUARED_FROBENIUS, lam31)])
    return ProblemSpec(
        data, [background, calcification, noise], options=AdmmOptions(eta=eta, **options)
    )


def ssd_config(
    data: Tensor,
    lam11: float = 1.0,
    lam12: float = 1.0,
    lam22: float = 0.08,
    eta: float = 0.01,
    **options,
) -> ProblemSpec:
    """Smooth-plus-sparse baseline: the crack setup without the temporal
    smoothness term.  Copy layout (2, 1)."""
    _require_order3(data, "ssd_config")
    background = Component(
        "background",
        [
            PenaltyTerm(SMOOTHNESS, lam11, modes=(2,), order=1),
            PenaltyTerm(SMOOTHNESS, lam12, modes=(3,), order=1),
        ],
    )
    sparse = Component("sparse", [PenaltyTerm(SPARSITY, lam22)])
    return ProblemSpec(data, [background, sparse], options=AdmmOptions(eta=eta, **options))


def rpca_config(
    data: Tensor,
    lam_lowrank: float = 1.0,
    lam_sparse: float = 0.1,
    eta: float = 0.01,
    **options,
) -> ProblemSpec:
    """Low-rank-plus-sparse baseline on the image-stack matricization.

    One component carries a nuclear norm on the mode-1 matricization, the
    other an elementwise l1.  Copy layout (1, 1)."""
    _require_order3(data, "rpca_config")
    lowrank = Component("low_rank", [PenaltyTerm(LOW_RANK, lam_lowrank, modes=(1,))])
    sparse = Component("sparse", [PenaltyTerm(SPARSITY, lam_sparse)])
    return ProblemSpec(data, [lowrank, sparse], options=AdmmOptions(eta=eta, **options))
