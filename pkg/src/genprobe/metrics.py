"""Per-layer quality metrics and their model-level aggregations.

Four layer measures are computed from a singular spectrum: stable quality
(arctan of stable rank over condition number), effective rank (Shannon
entropy of the normalized spectrum, after Roy & Vetterli), Frobenius norm
and spectral norm. Model-level values combine the layers by a
depth-normalized product (stable quality), a depth-normalized L2 norm in
log domain (effective rank), and log-domain depth-normalized products of
the squared norms.

Note on sign: effective rank is reported as the non-negative entropy
-sum(p*ln p) in nats. Under this convention larger values mean flatter
spectra; a correlation computed against it has the opposite sign of one
computed against the negated variant, with unchanged magnitude.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import lrf
from .spectra import (
    DegenerateSpectrum,
    SingularSpectrum,
    STORAGE_EPS,
    WeightTensor,
    numerical_rank,
    singular_values,
    unfold,
)

log = logging.getLogger(__name__)

MODEL_METRIC_IDS = ("SQ_p", "E_L2", "F_p", "S_p")

# floor applied to per-layer effective rank before the L2 aggregation so a
# rank-1 layer (entropy 0) does not produce log(0)
ER_FLOOR = 1e-12


class EmptyModel(ValueError):
    """No non-degenerate layer to aggregate."""


class DegenerateNorm(ValueError):
    """A zero Frobenius or spectral norm makes the log-domain aggregate undefined."""


@dataclass(frozen=True)
class LayerMetrics:
    layer_name: str
    sq: float
    er: float
    fro: float
    spec: float
    lrf_applied: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class ModelMetrics:
    q_sq_p: float
    q_e_l2: float
    q_f_p: float
    q_s_p: float
    depth: int
    lrf_applied: bool = False

    def value(self, metric_id: str) -> float:
        base = metric_id.removeprefix("lrf.")
        try:
            return {
                "SQ_p": self.q_sq_p,
                "E_L2": self.q_e_l2,
                "F_p": self.q_f_p,
                "S_p": self.q_s_p,
            }[base]
        except KeyError:
            raise KeyError(f"unknown metric id {metric_id!r}") from None


def _live(s: SingularSpectrum) -> np.ndarray:
    vals = s.values[s.values > s.zero_tol]
    if vals.size == 0:
        raise DegenerateSpectrum("all singular values are at or below the zero tolerance")
    return vals


def stable_quality(s: SingularSpectrum) -> float:
    """arctan(stable rank / condition number), in (0, pi/2)."""
    vals = _live(s)
    stable_rank = float(np.sum(vals**2)) / float(vals[0]) ** 2
    condition = float(vals[0]) / float(vals[-1])
    return math.atan2(stable_rank, condition)


def effective_rank(s: SingularSpectrum) -> float:
    """Shannon entropy of the normalized singular values, in nats."""
    vals = _live(s)
    p = vals / np.sum(vals)
    return float(-np.sum(p * np.log(p)))


def frobenius_norm(s: SingularSpectrum) -> float:
    """sqrt of the sum of all squared singular values (no tolerance cutoff)."""
    return float(np.sqrt(np.sum(s.values**2)))


def spectral_norm(s: SingularSpectrum) -> float:
    """Largest singular value."""
    return float(s.values[0])


def eligible_layer(t: WeightTensor) -> bool:
    """Keep conv and linear weights; drop biases and normalization vectors."""
    return len(t.shape) in (2, 4) and t.shape[0] > 1 and t.shape[1] > 1


def probe_layer(t: WeightTensor, use_lrf: bool = False) -> LayerMetrics:
    """Compute the four metrics for one weight tensor.

    Each unfolding contributes one set of metric values and the sets are
    averaged arithmetically. With ``use_lrf`` every spectrum is first
    shrunk by EVB factorization; unfoldings whose spectrum empties are
    dropped, and if none survives the layer is returned degenerate with
    zeroed fields.
    """
    storage_eps = STORAGE_EPS[t.dtype]
    per_unfolding = []
    for mat in unfold(t):
        s = singular_values(mat, storage_eps=storage_eps)
        if use_lrf:
            try:
                s = lrf.shrink_spectrum(s)
            except (lrf.EmptyResult, DegenerateSpectrum):
                continue
        try:
            per_unfolding.append(
                (stable_quality(s), effective_rank(s), frobenius_norm(s), spectral_norm(s))
            )
        except DegenerateSpectrum:
            continue
    if not per_unfolding:
        return LayerMetrics(t.name, 0.0, 0.0, 0.0, 0.0, lrf_applied=use_lrf, degenerate=True)
    sq, er, fro, spec = np.mean(np.asarray(per_unfolding, dtype=np.float64), axis=0)
    return LayerMetrics(t.name, float(sq), float(er), float(fro), float(spec), lrf_applied=use_lrf)


def aggregate_model(layers: list[LayerMetrics]) -> ModelMetrics:
    """Aggregate per-layer metrics to the four model-level measures.

    Degenerate layers are excluded and do not count toward the depth.
    Norm products are evaluated in log domain so deep models cannot
    overflow.
    """
    included = [m for m in layers if not m.degenerate]
    for m in layers:
        if m.degenerate:
            log.warning("layer %s is degenerate and excluded from aggregation", m.layer_name)
    if not included:
        raise EmptyModel("no non-degenerate layers to aggregate")
    if any(m.fro <= 0.0 or m.spec <= 0.0 for m in included):
        raise DegenerateNorm("zero norm layer makes the log-domain product undefined")
    d = len(included)
    sq = np.array([m.sq for m in included])
    er = np.maximum([m.er for m in included], ER_FLOOR)
    fro = np.array([m.fro for m in included])
    spec = np.array([m.spec for m in included])
    lrf_applied = any(m.lrf_applied for m in included)
    return ModelMetrics(
        q_sq_p=float(np.prod(sq) ** (1.0 / d)),
        q_e_l2=float(np.log(np.sqrt(np.sum(er**2) / d))),
        q_f_p=float(0.5 * np.log(d) + np.mean(np.log(fro))),
        q_s_p=float(0.5 * np.log(d) + np.mean(np.log(spec))),
        depth=d,
        lrf_applied=lrf_applied,
    )
