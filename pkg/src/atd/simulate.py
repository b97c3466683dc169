"""Seeded scene generators for the two simulation studies.

Both generators return the observed tensor together with its exact
ground-truth components (the components sum to the data bit-exactly; no
hidden noise term), so decompositions can be scored against the truth.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .config import CONFIG_VERSION, file_sha256, load_config, save_config
from .errors import ValidationError
from .tensor import Tensor, read_tensor, write_tensor

#: Background Gaussian-process parameters for the crack scene: squared
#: exponential kernel, length scale in pixels, marginal standard
#: deviation, and mean intensity (comparable to crack values so the
#: decomposition is nontrivial).
GP_LENGTH_SCALE = 8.0
GP_STD = 0.05
GP_MEAN = 0.3

#: Crack pixel intensities: mean and variance of the normal draw.
CRACK_MEAN = 0.1
CRACK_VAR = 0.1


@dataclass
class CrackScene:
    """Image stack with a smooth background plus a growing crack."""

    m: Tensor
    x1_true: Tensor
    x2_true: Tensor
    support: np.ndarray  # bool, same dims: crack pixels per image
    seed: int

    kind = "crack"

    @property
    def truths(self) -> list[tuple[str, Tensor]]:
        return [("background", self.x1_true), ("crack", self.x2_true)]


@dataclass
class HotspotScene:
    """Image stack: varying two-field background plus static and moving
    hot blocks."""

    m: Tensor
    x1_true: Tensor
    x2_true: Tensor
    x3_true: Tensor
    t0: np.ndarray  # heating field, range [0, 1], peak at the center
    t1: np.ndarray  # cooling field, 0 at upper-left to 1 at lower-right
    u: np.ndarray   # per-image mixing weights in [0, 1]
    seed: int

    kind = "hotspot"

    @property
    def truths(self) -> list[tuple[str, Tensor]]:
        return [
            ("background", self.x1_true),
            ("static_hotspot", self.x2_true),
            ("moving_hotspot", self.x3_true),
        ]


def _se_kernel_cholesky(extent: int, length_scale: float) -> np.ndarray:
    idx = np.arange(extent, dtype=np.float64)
    k = np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * length_scale**2))
    k[np.diag_indices(extent)] += 1e-10
    return np.linalg.cholesky(k)


def gen_crack(seed: int, dims: tuple[int, int, int] = (30, 40, 40)) -> CrackScene:
    """Crack-growth scene: `dims[0]` images of a smooth random background
    with a monotonically growing crack polyline on top.

    The background of each image is an independent draw from a 2-D
    stationary Gaussian process (separable squared-exponential kernel).
    The crack is a column-monotone pixel path; image i shows the first
    ceil(L * i / I1) pixels of it, with intensities drawn i.i.d. normal
    per image and pixel.  Identical seeds give identical scenes.
    """
    n_img, n_row, n_col = (int(d) for d in dims)
    if n_img < 1 or n_row < 4 or n_col < 6:
        raise ValidationError(f"crack scene needs dims >= (1, 4, 6), got {dims}")
    rng = np.random.default_rng(seed)

    chol_r = _se_kernel_cholesky(n_row, GP_LENGTH_SCALE)
    chol_c = _se_kernel_cholesky(n_col, GP_LENGTH_SCALE)
    background = np.empty((n_img, n_row, n_col))
    for i in range(n_img):
        g = rng.standard_normal((n_row, n_col))
        background[i] = GP_MEAN + GP_STD * (chol_r @ g @ chol_c.T)

    # column-monotone pixel path; rows do a reflected random walk
    start_row = int(rng.integers(n_row // 4, max(n_row // 4 + 1, 3 * n_row // 4)))
    start_col = int(rng.integers(1, max(2, n_col // 8)))
    path = [(start_row, start_col)]
    row = start_row
    for col in range(start_col + 1, n_col - 1):
        row = min(max(row + int(rng.integers(-1, 2)), 0), n_row - 1)
        path.append((row, col))
    length = len(path)

    support = np.zeros((n_img, n_row, n_col), dtype=bool)
    crack = np.zeros((n_img, n_row, n_col))
    crack_std = math.sqrt(CRACK_VAR)
    for i in range(n_img):
        visible = math.ceil(length * (i + 1) / n_img)
        rows = [p[0] for p in path[:visible]]
        cols = [p[1] for p in path[:visible]]
        support[i, rows, cols] = True
        crack[i, rows, cols] = rng.normal(CRACK_MEAN, crack_std, size=visible)

    x1 = Tensor(background, copy=False)
    x2 = Tensor(crack, copy=False)
    return CrackScene(m=x1 + x2, x1_true=x1, x2_true=x2, support=support, seed=seed)


def gen_hotspot(seed: int, dims: tuple[int, int, int] = (30, 40, 40)) -> HotspotScene:
    """Overheating scene: background mixes a centered heating field with a
    diagonal cooling ramp; one 2x2 unit block stays fixed at the lower
    left while another marches rightward across the upper region.
    """
    n_img, n_row, n_col = (int(d) for d in dims)
    if n_img < 1 or n_row < 10 or n_col < 8:
        raise ValidationError(f"hotspot scene needs dims >= (1, 10, 8), got {dims}")
    rng = np.random.default_rng(seed)

    rows = np.arange(1, n_row + 1, dtype=np.float64)
    cols = np.arange(1, n_col + 1, dtype=np.float64)
    center_r, center_c = n_row // 2, n_col // 2
    radial = (rows[:, None] - center_r) ** 2 + (cols[None, :] - center_c) ** 2
    t0 = np.exp(-radial / 20.0)  # isotropic Gaussian bump, covariance 10 I
    t0 = (t0 - t0.min()) / (t0.max() - t0.min())

    ramp = rows[:, None] + cols[None, :]
    t1 = (ramp - 2.0) / (n_row + n_col - 2.0)

    u = rng.uniform(size=n_img)
    background = u[:, None, None] * t0 + (1.0 - u)[:, None, None] * t1

    static = np.zeros((n_img, n_row, n_col))
    static[:, n_row - 6 : n_row - 4, 2:4] = 1.0

    moving = np.zeros((n_img, n_row, n_col))
    top_row = max(1, n_row // 5)
    for i in range(n_img):
        col = min(3 + i, n_col - 2)
        moving[i, top_row : top_row + 2, col : col + 2] = 1.0

    x1 = Tensor(background, copy=False)
    x2 = Tensor(static, copy=False)
    x3 = Tensor(moving, copy=False)
    return HotspotScene(
        m=x1 + x2 + x3,
        x1_true=x1,
        x2_true=x2,
        x3_true=x3,
        t0=t0,
        t1=t1,
        u=u,
        seed=seed,
    )


def write_scene(scene: CrackScene | HotspotScene, out_dir: str | os.PathLike) -> dict:
    """Write the scene's tensors plus a manifest; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    files = {"m": "m.atd"}
    write_tensor(scene.m, os.path.join(out_dir, "m.atd"))
    for name, truth in scene.truths:
        fname = f"truth_{name}.atd"
        files[name] = fname
        write_tensor(truth, os.path.join(out_dir, fname))
    manifest = {
        "atd_config_version": CONFIG_VERSION,
        "scene": scene.kind,
        "seed": scene.seed,
        "dims": list(scene.m.dims),
        "components": [name for name, _ in scene.truths],
        "files": files,
        "hashes": {
            key: file_sha256(os.path.join(out_dir, fname))
            for key, fname in files.items()
        },
    }
    if scene.kind == "crack":
        manifest["params"] = {
            "gp_length_scale": GP_LENGTH_SCALE,
            "gp_std": GP_STD,
            "gp_mean": GP_MEAN,
            "crack_mean": CRACK_MEAN,
            "crack_var": CRACK_VAR,
        }
    save_config(manifest, os.path.join(out_dir, "manifest.yaml"))
    return manifest


def load_scene(scene_dir: str | os.PathLike) -> tuple[Tensor, list[tuple[str, Tensor]], dict]:
    """Read back a scene directory: (data, [(component name, truth)], manifest)."""
    manifest = load_config(os.path.join(scene_dir, "manifest.yaml"))
    files = manifest.get("files", {})
    if "m" not in files:
        raise ValidationError(f"{scene_dir}: manifest lists no data tensor")
    data = read_tensor(os.path.join(scene_dir, files["m"]))
    truths = [
        (name, read_tensor(os.path.join(scene_dir, files[name])))
        for name in manifest.get("components", [])
    ]
    return data, truths, manifest
