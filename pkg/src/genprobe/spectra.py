"""Weight-tensor unfolding and singular spectra.

Everything downstream (quality metrics, low-rank shrinkage) consumes a
``SingularSpectrum`` produced here. Computation is always done in double
precision; the storage precision of the source tensor only enters through
the rank tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STORAGE_EPS = {
    "f32": float(np.finfo(np.float32).eps),
    "f64": float(np.finfo(np.float64).eps),
}


class UnsupportedShape(ValueError):
    """Tensor rank is not 2 or 4."""


class NonFinite(ValueError):
    """Input contains NaN or Inf."""


class DegenerateSpectrum(ValueError):
    """A spectrum with no singular value above its zero tolerance."""


@dataclass(frozen=True)
class WeightTensor:
    """A named weight tensor, row-major, with its storage precision.

    ``data`` is kept flat (1-D float64); use :meth:`as_array` for the shaped
    view. ``dtype`` records how the values were stored on disk ("f32" or
    "f64") and controls the rank tolerance of derived spectra.
    """

    name: str
    shape: tuple[int, ...]
    data: np.ndarray
    dtype: str = "f64"

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2, 4):
            raise UnsupportedShape(f"{self.name}: rank-{len(shape)} tensors are not supported")
        if any(s < 1 for s in shape):
            raise UnsupportedShape(f"{self.name}: all dimensions must be >= 1, got {shape}")
        if self.dtype not in STORAGE_EPS:
            raise ValueError(f"{self.name}: unknown storage dtype {self.dtype!r}")
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "data", data)
        n = int(np.prod(shape))
        if data.size != n:
            raise ValueError(f"{self.name}: {data.size} values for shape {shape} (expected {n})")
        if not np.all(np.isfinite(data)):
            raise NonFinite(f"{self.name}: tensor contains non-finite values")

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)


@dataclass(frozen=True)
class SingularSpectrum:
    """Descending singular values of one matrix unfolding.

    ``zero_tol`` is the numerical-rank cutoff
    eps(storage) * max(m, n) * sigma_max, zero for an all-zero matrix.
    """

    values: np.ndarray
    m: int
    n: int
    zero_tol: float = field(init=False)
    storage_eps: float = STORAGE_EPS["f64"]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        if values.size != min(self.m, self.n):
            raise ValueError(
                f"spectrum has {values.size} values for a {self.m}x{self.n} matrix"
            )
        if np.any(values < 0) or np.any(values[:-1] < values[1:]):
            raise ValueError("singular values must be sorted descending and non-negative")
        top = float(values[0]) if values.size else 0.0
        object.__setattr__(
            self, "zero_tol", self.storage_eps * max(self.m, self.n) * top
        )


def unfold(t: WeightTensor) -> list[np.ndarray]:
    """Unfold a weight tensor into its matrix views.

    2-D tensors map to themselves. A 4-D tensor (c_out, c_in, k_h, k_w)
    yields two unfoldings: mode-out (c_out, c_in*k_h*k_w) and mode-in
    (c_in, c_out*k_h*k_w), both preserving row-major order of the grouped
    axes.
    """
    a = t.as_array()
    if a.ndim == 2:
        return [a]
    if a.ndim == 4:
        c_out, c_in = a.shape[0], a.shape[1]
        mode_out = a.reshape(c_out, -1)
        mode_in = a.transpose(1, 0, 2, 3).reshape(c_in, -1)
        return [mode_out, mode_in]
    raise UnsupportedShape(f"{t.name}: cannot unfold rank-{a.ndim} tensor")


def singular_values(a: np.ndarray, storage_eps: float = STORAGE_EPS["f64"]) -> SingularSpectrum:
    """All min(m, n) singular values of a real matrix, descending."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix contains non-finite values")
    vals = np.linalg.svd(a, compute_uv=False)
    return SingularSpectrum(values=vals, m=a.shape[0], n=a.shape[1], storage_eps=storage_eps)


def numerical_rank(s: SingularSpectrum) -> int:
    """Count of singular values strictly above the zero tolerance."""
    return int(np.sum(s.values > s.zero_tol))
