"""Problem config files and run/scene manifests (one YAML format).

A problem config looks like::

    atd_config_version: 1
    data: measurements.atd        # optional path, may be overridden
    components:
      - name: background
        terms:
          - kind: smoothness
            modes: [2, 3]
            lambda: 1.0
            options: {order: 1, boundary: plain}
    admm:
      eta: 0.01
      stop_tol: 1.0e-06
      max_iters: 5000
      step3_variant: standard
    ridge_eps: 0.0

Term ``options`` depend on the kind: smoothness takes ``order`` and
``boundary`` (scalar or per-mode list); sparsity takes
``threshold_style``; low_rank takes ``slice_modes``; piecewise_constancy
takes ``slice_modes`` and ``neighborhood``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict

import yaml

from .admm import AdmmOptions
from .errors import ValidationError
from .penalties import (
    KINDS,
    LOW_RANK,
    PIECEWISE_CONSTANCY,
    SMOOTHNESS,
    SPARSITY,
    PenaltyTerm,
)
from .problems import Component, ProblemSpec
from .tensor import Tensor, read_tensor

CONFIG_VERSION = 1


def term_to_dict(term: PenaltyTerm) -> dict:
    out: dict = {"kind": term.kind, "lambda": term.lam}
    if term.modes:
        out["modes"] = list(term.modes)
    options: dict = {}
    if term.kind == SMOOTHNESS:
        options["order"] = (
            list(term.order) if isinstance(term.order, tuple) else term.order
        )
        options["boundary"] = (
            list(term.boundary) if isinstance(term.boundary, tuple) else term.boundary
        )
    elif term.kind == SPARSITY:
        if term.threshold_style != "signed":
            options["threshold_style"] = term.threshold_style
    elif term.kind == LOW_RANK:
        if term.slice_modes:
            options["slice_modes"] = list(term.slice_modes)
    elif term.kind == PIECEWISE_CONSTANCY:
        if term.slice_modes:
            options["slice_modes"] = list(term.slice_modes)
        if term.neighborhood is not None:
            options["neighborhood"] = term.neighborhood
    if options:
        out["options"] = options
    return out


def term_from_dict(d: dict, path: str) -> PenaltyTerm:
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: term must be a mapping, got {type(d).__name__}")
    unknown = set(d) - {"kind", "lambda", "modes", "options"}
    if unknown:
        raise ValidationError(f"{path}: unknown term keys {sorted(unknown)}")
    try:
        kind = d["kind"]
        lam = float(d["lambda"])
    except KeyError as exc:
        raise ValidationError(f"{path}: missing required key {exc}") from exc
    if kind not in KINDS:
        raise ValidationError(f"{path}: unknown kind {kind!r}")
    modes = tuple(int(m) for m in d.get("modes", []) or [])
    options = d.get("options") or {}
    if not isinstance(options, dict):
        raise ValidationError(f"{path}: options must be a mapping")

    allowed = {
        SMOOTHNESS: {"order", "boundary"},
        SPARSITY: {"threshold_style"},
        LOW_RANK: {"slice_modes"},
        PIECEWISE_CONSTANCY: {"slice_modes", "neighborhood"},
        "squared_frobenius": set(),
    }[kind]
    unknown = set(options) - allowed
    if unknown:
        raise ValidationError(
            f"{path}: options {sorted(unknown)} not valid for kind {kind!r}"
        )

    kwargs: dict = {}
    if "order" in options:
        o = options["order"]
        kwargs["order"] = tuple(int(v) for v in o) if isinstance(o, list) else int(o)
    if "boundary" in options:
        b = options["boundary"]
        kwargs["boundary"] = tuple(str(v) for v in b) if isinstance(b, list) else str(b)
    if "threshold_style" in options:
        kwargs["threshold_style"] = str(options["threshold_style"])
    if "slice_modes" in options:
        kwargs["slice_modes"] = tuple(int(m) for m in options["slice_modes"])
    if "neighborhood" in options and options["neighborhood"] is not None:
        kwargs["neighborhood"] = str(options["neighborhood"])
    return PenaltyTerm(kind, lam, modes=modes, **kwargs)


def problem_to_config(spec: ProblemSpec, data_path: str | None = None) -> dict:
    """Mapping form of a problem, suitable for :func:`save_config`."""
    return {
        "atd_config_version": CONFIG_VERSION,
        "data": data_path,
        "components": [
            {"name": comp.name, "terms": [term_to_dict(t) for t in comp.terms]}
            for comp in spec.components
        ],
        "admm": asdict(spec.options),
        "ridge_eps": spec.ridge_eps,
    }


def config_to_problem(
    cfg: dict,
    data: Tensor | None = None,
    base_dir: str | None = None,
) -> ProblemSpec:
    """Problem from a config mapping.

    `data` overrides the config's ``data`` path; otherwise the path is
    loaded (relative to `base_dir` when given).
    """
    if not isinstance(cfg, dict):
        raise ValidationError("config root must be a mapping")
    version = cfg.get("atd_config_version")
    if version != CONFIG_VERSION:
        raise ValidationError(
            f"atd_config_version must be {CONFIG_VERSION}, got {version!r}"
        )
    unknown = set(cfg) - {"atd_config_version", "data", "components", "admm", "ridge_eps"}
    if unknown:
        raise ValidationError(f"unknown config sections {sorted(unknown)}")

    if data is None:
        path = cfg.get("data")
        if not path:
            raise ValidationError("config has no data path and no tensor was supplied")
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        data = read_tensor(path)

    raw_components = cfg.get("components")
    if not isinstance(raw_components, list) or not raw_components:
        raise ValidationError("components must be a nonempty list")
    components = []
    for ci, raw in enumerate(raw_components, start=1):
        if not isinstance(raw, dict) or "name" not in raw:
            raise ValidationError(f"component {ci}: needs a name")
        terms = [
            term_from_dict(t, f"component {ci} ({raw['name']!r}) term {ti}")
            for ti, t in enumerate(raw.get("terms", []) or [], start=1)
        ]
        components.append(Component(str(raw["name"]), terms))

    admm_cfg = cfg.get("admm") or {}
    unknown = set(admm_cfg) - {"eta", "stop_tol", "max_iters", "step3_variant"}
    if unknown:
        raise ValidationError(f"unknown admm keys {sorted(unknown)}")
    options = AdmmOptions(
        eta=float(admm_cfg.get("eta", 0.01)),
        stop_tol=float(admm_cfg.get("stop_tol", 1e-6)),
        max_iters=int(admm_cfg.get("max_iters", 5000)),
        step3_variant=str(admm_cfg.get("step3_variant", "standard")),
    )
    return ProblemSpec(
        data=data,
        components=components,
        ridge_eps=float(cfg.get("ridge_eps", 0.0) or 0.0),
        options=options,
    )


def save_config(cfg: dict, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


def load_config(path: str | os.PathLike) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config root must be a mapping")
    return cfg


def file_sha256(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
