"""Dense order-d tensors with 1-based index machinery and file I/O.

Conventions used throughout the package:

* modes (axes) are numbered 1..d and element indices run 1..I_k, matching
  the usual mathematical notation for tensors;
* the linear storage order puts the *first* index fastest, so
  ``vec(t)[i1 + (i2-1)*I1 + (i3-1)*I1*I2 + ...]`` (1-based) is
  ``t[i1, i2, i3, ...]``.  This makes matricization with
  ``row_modes=(1,..,d)`` a pure reinterpretation of the storage.

Internally data lives in a ``numpy.ndarray`` of shape ``dims``; the
first-index-fastest order shows up as Fortran-order raveling.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import TensorIOError, ValidationError

MAX_ORDER = 8

_ATD_MAGIC = b"ATD1"


class Tensor:
    """Dense real tensor of order 1..8 with 64-bit float elements.

    Parameters
    ----------
    data : array-like
        Element values.  If `dims` is given, `data` may be flat and is
        interpreted in storage order (first index fastest); otherwise the
        array's own shape is used.
    dims : sequence of int, optional
        Target extents (I_1, ..., I_d).
    copy : bool
        Copy the input (default) or adopt it when it already is a float64
        ndarray of the right shape.
    """

    __slots__ = ("data",)

    def __init__(self, data, dims: Sequence[int] | None = None, copy: bool = True):
        arr = np.array(data, dtype=np.float64, copy=copy)
        if dims is not None:
            dims = tuple(int(e) for e in dims)
            arr = arr.reshape(dims, order="F")
        if arr.ndim < 1 or arr.ndim > MAX_ORDER:
            raise ValidationError(
                f"tensor order must be between 1 and {MAX_ORDER}, got {arr.ndim}"
            )
        if any(e < 1 for e in arr.shape):
            raise ValidationError(f"every extent must be >= 1, got {arr.shape}")
        self.data = arr

    # -- basic properties -------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def numel(self) -> int:
        return self.data.size

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.data.ravel()))

    def copy(self) -> "Tensor":
        return Tensor(self.data, copy=True)

    # -- 1-based element access -------------------------------------------

    def _check_multi_index(self, idx) -> tuple[int, ...]:
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) != self.order:
            raise IndexError(
                f"expected {self.order} indices, got {len(idx)}"
            )
        out = []
        for k, (i, ext) in enumerate(zip(idx, self.dims), start=1):
            i = int(i)
            if not 1 <= i <= ext:
                raise IndexError(
                    f"index {i} out of range 1..{ext} at mode {k}"
                )
            out.append(i - 1)
        return tuple(out)

    def __getitem__(self, idx) -> float:
        return float(self.data[self._check_multi_index(idx)])

    def __setitem__(self, idx, value) -> None:
        self.data[self._check_multi_index(idx)] = float(value)

    # -- arithmetic (elementwise, shape-checked) ---------------------------

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Tensor):
            if other.dims != self.dims:
                raise ValidationError(
                    f"shape mismatch: {self.dims} vs {other.dims}"
                )
            return other.data
        return np.asarray(other, dtype=np.float64)

    def __add__(self, other) -> "Tensor":
        return Tensor(self.data + self._coerce(other), copy=False)

    def __sub__(self, other) -> "Tensor":
        return Tensor(self.data - self._coerce(other), copy=False)

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, copy=False)

    def __mul__(self, scalar) -> "Tensor":
        return Tensor(self.data * float(scalar), copy=False)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.dims == other.dims
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):  # pragma: no cover - tensors are not hashable
        raise TypeError("Tensor is not hashable")

    def allclose(self, other: "Tensor", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        return self.dims == other.dims and np.allclose(
            self.data, other.data, atol=atol, rtol=rtol
        )

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"

    # -- sections -----------------------------------------------------------

    def slice(self, modes: Sequence[int], indices: Sequence[int]):
        """Sub-tensor with the given modes fixed at the given 1-based indices.

        Returns a Tensor of order ``d - len(modes)``; fixing every mode
        returns the scalar element as a float.
        """
        modes = _check_mode_list(modes, self.order, "slice modes")
        indices = tuple(int(i) for i in indices)
        if len(indices) != len(modes):
            raise ValidationError("modes and indices must have equal length")
        key: list = [slice(None)] * self.order
        for m, i in zip(modes, indices):
            if not 1 <= i <= self.dims[m - 1]:
                raise IndexError(
                    f"index {i} out of range 1..{self.dims[m - 1]} at mode {m}"
                )
            key[m - 1] = i - 1
        out = self.data[tuple(key)]
        if out.ndim == 0:
            return float(out)
        return Tensor(out, copy=True)


def vec(t: Tensor) -> np.ndarray:
    """Vectorization in storage order (first index fastest)."""
    return t.data.ravel(order="F")


def from_vec(values: np.ndarray, dims: Sequence[int]) -> Tensor:
    """Inverse of :func:`vec`."""
    return Tensor(np.asarray(values, dtype=np.float64), dims=dims)


def _check_mode_list(modes, order: int, what: str) -> tuple[int, ...]:
    modes = tuple(int(m) for m in modes)
    if any(not 1 <= m <= order for m in modes):
        raise ValidationError(f"{what} {modes} out of range 1..{order}")
    if len(set(modes)) != len(modes):
        raise ValidationError(f"{what} {modes} contains duplicates")
    return modes


@dataclass(frozen=True)
class MatricizationSpec:
    """Partition of the modes 1..d into an ordered row group and column group.

    ``col_modes=None`` means the remaining modes in ascending order.  Entry
    (r, c) of the resulting matrix is the tensor element whose row-group
    indices compose to r and column-group indices to c, both with the
    first listed mode fastest.
    """

    row_modes: tuple[int, ...]
    col_modes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "row_modes", tuple(int(m) for m in self.row_modes))
        if self.col_modes is not None:
            object.__setattr__(
                self, "col_modes", tuple(int(m) for m in self.col_modes)
            )

    def resolve(self, order: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Validated (row_modes, col_modes) for a tensor of the given order."""
        rows = _check_mode_list(self.row_modes, order, "row modes")
        if not rows:
            raise ValidationError("row modes must be nonempty")
        if self.col_modes is None:
            cols = tuple(m for m in range(1, order + 1) if m not in rows)
        else:
            cols = _check_mode_list(self.col_modes, order, "column modes")
        if sorted(rows + cols) != list(range(1, order + 1)):
            raise ValidationError(
                f"row modes {rows} and column modes {cols} must partition 1..{order}"
            )
        return rows, cols


def matricize(t: Tensor, spec: MatricizationSpec | Sequence[int]) -> np.ndarray:
    """Reshape `t` into a matrix by partitioning modes into rows and columns.

    Returns an ndarray of shape (prod of row extents, prod of column
    extents).
    """
    if not isinstance(spec, MatricizationSpec):
        spec = MatricizationSpec(tuple(spec))
    rows, cols = spec.resolve(t.order)
    perm = [m - 1 for m in rows + cols]
    nrow = math.prod(t.dims[m - 1] for m in rows)
    ncol = math.prod(t.dims[m - 1] for m in cols)
    return np.transpose(t.data, perm).reshape((nrow, ncol), order="F")


def dematricize(
    m: np.ndarray, spec: MatricizationSpec | Sequence[int], dims: Sequence[int]
) -> Tensor:
    """Inverse of :func:`matricize`: rebuild the tensor of shape `dims`."""
    if not isinstance(spec, MatricizationSpec):
        spec = MatricizationSpec(tuple(spec))
    dims = tuple(int(e) for e in dims)
    rows, cols = spec.resolve(len(dims))
    m = np.asarray(m, dtype=np.float64)
    nrow = math.prod(dims[k - 1] for k in rows)
    ncol = math.prod(dims[k - 1] for k in cols)
    if m.ndim != 2 or m.shape != (nrow, ncol):
        raise ValidationError(
            f"matrix shape {m.shape} inconsistent with dims {dims} under "
            f"rows {rows} / cols {cols} (expected {(nrow, ncol)})"
        )
    permuted_shape = tuple(dims[k - 1] for k in rows + cols)
    arr = m.reshape(permuted_shape, order="F")
    inverse = np.argsort([k - 1 for k in rows + cols])
    return Tensor(np.transpose(arr, inverse), copy=True)


def fibers(t: Tensor, mode: int) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
    """Iterate over mode-`mode` fibers as (index, view) pairs.

    The index is the 1-based multi-index of the remaining modes (ascending
    mode order); the view is a length ``I_mode`` ndarray writing into the
    tensor.  Fibers are visited with the lowest remaining mode fastest.
    """
    (mode,) = _check_mode_list([mode], t.order, "fiber mode")
    moved = np.moveaxis(t.data, mode - 1, 0)
    rest = moved.shape[1:]
    for rev_idx in np.ndindex(*rest[::-1]):
        idx = rev_idx[::-1]
        yield tuple(i + 1 for i in idx), moved[(slice(None),) + idx]


def tensor_slices(t: Tensor, modes: Sequence[int]) -> Iterator[tuple[tuple[int, ...], Tensor]]:
    """Iterate over all slices at the given modes as (index, Tensor) pairs.

    Indices are 1-based and visited with the first listed mode fastest.
    """
    modes = _check_mode_list(modes, t.order, "slice modes")
    extents = [t.dims[m - 1] for m in modes]
    for rev_idx in np.ndindex(*extents[::-1]):
        idx = tuple(i + 1 for i in rev_idx[::-1])
        yield idx, t.slice(modes, idx)


# -- binary tensor files -------------------------------------------------


def write_tensor(t: Tensor, path: str | os.PathLike) -> None:
    """Write `t` to a binary tensor file (see :func:`read_tensor`)."""
    with open(path, "wb") as fh:
        fh.write(_ATD_MAGIC)
        fh.write(struct.pack("<I", t.order))
        fh.write(struct.pack(f"<{t.order}Q", *t.dims))
        fh.write(vec(t).astype("<f8").tobytes())


def read_tensor(path: str | os.PathLike) -> Tensor:
    """Read a binary tensor file.

    Layout: 4-byte magic ``ATD1``; uint32 little-endian order d; d uint64
    little-endian extents; prod(dims) float64 little-endian values in
    storage order.  Round trips with :func:`write_tensor` are bit-exact.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _ATD_MAGIC:
        raise TensorIOError(f"{path}: bad magic (not a tensor file)")
    if len(raw) < 8:
        raise TensorIOError(f"{path}: truncated header")
    (order,) = struct.unpack_from("<I", raw, 4)
    if not 1 <= order <= MAX_ORDER:
        raise TensorIOError(f"{path}: unsupported tensor order {order}")
    header_end = 8 + 8 * order
    if len(raw) < header_end:
        raise TensorIOError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{order}Q", raw, 8)
    if any(e < 1 for e in dims):
        raise TensorIOError(f"{path}: invalid extents {dims}")
    count = math.prod(dims)
    payload = raw[header_end:]
    if len(payload) != 8 * count:
        raise TensorIOError(
            f"{path}: payload length mismatch (expected {count} values, "
            f"got {len(payload) / 8:g})"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Tensor(values, dims=dims)


def read_csv_slices(paths: Iterable[str | os.PathLike]) -> Tensor:
    """Assemble an order-3 tensor from CSV files, one per mode-1 slice.

    Row i of each file becomes row i of the corresponding slice; files are
    stacked in the given order along mode 1.
    """
    paths = list(paths)
    if not paths:
        raise TensorIOError("no CSV files given")
    slices = []
    for p in paths:
        try:
            arr = np.loadtxt(p, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise TensorIOError(f"{p}: malformed CSV ({exc})") from exc
        slices.append(arr)
    shape = slices[0].shape
    for p, arr in zip(paths, slices):
        if arr.shape != shape:
            raise TensorIOError(
                f"{p}: slice shape {arr.shape} differs from first file {shape}"
            )
    return Tensor(np.stack(slices, axis=0), copy=False)


# -- image export ---------------------------------------------------------


def export_pgm(t: Tensor, mode: int, out_dir: str | os.PathLike) -> list[str]:
    """Write each mode-`mode` slice of an order-3 tensor as a binary PGM.

    All slices share one linear gray scale built from the global min/max of
    `t` (a constant tensor maps to mid-gray 128); values are rounded half
    up.  Files are named ``slice_000.pgm``, ``slice_001.pgm``, ...  Returns
    the list of paths written.
    """
    if t.order != 3:
        raise ValidationError(
            f"PGM export supports order-3 tensors only, got order {t.order}"
        )
    (mode,) = _check_mode_list([mode], 3, "slice mode")
    lo = float(t.data.min())
    hi = float(t.data.max())
    if hi > lo:
        scaled = np.floor((t.data - lo) * (255.0 / (hi - lo)) + 0.5)
        bytes_ = np.clip(scaled, 0, 255).astype(np.uint8)
    else:
        bytes_ = np.full(t.dims, 128, dtype=np.uint8)
    moved = np.moveaxis(bytes_, mode - 1, 0)
    os.makedirs(out_dir, exist_ok=True)
    count = moved.shape[0]
    width = max(3, len(str(count - 1)))
    paths = []
    for i in range(count):
        img = moved[i]
        path = os.path.join(out_dir, f"slice_{i:0{width}d}.pgm")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(np.ascontiguousarray(img).tobytes())
        paths.append(path)
    return paths
