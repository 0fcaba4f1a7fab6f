"""Margin reward enforcement loss and its analytic gradient.

For one pair with rewards ``r_w`` (accepted), ``r_l`` (rejected), sub-margins
``m`` and total margin ``M > 0``, with ``gap = r_w - r_l``::

    ind_j = relu(m_j - gap_j)          if m_j > 0
          = relu(gap_j - m_j)          if m_j < 0
          = relu(|gap_j| - c)          if m_j == 0
    l_ind = mean_j ind_j
    l_tot = relu(M - sum_j gap_j)
    loss  = l_ind + lam * l_tot

The batch loss sums over pairs (``reduction="mean"`` divides by the pair
count). Writing the second branch as ``relu(-t (gap - m))`` with ``t = -1``
gives the same expression, so one sign flag covers both non-zero cases.

Subgradient convention: ``relu'(0) = 0`` and ``d|x|/dx = 0`` at ``x = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, StructuralError, ValidationError


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    c: float = 1e-2
    use_ind: bool = True
    use_tot: bool = True
    reduction: str = "sum"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError("lambda must be > 0", "lam")
        if not self.c > 0:
            raise ValidationError("c must be > 0", "c")
        if not (self.use_ind or self.use_tot):
            raise ValidationError("at least one loss term must be enabled")
        if self.reduction not in ("sum", "mean"):
            raise ValidationError(f"unknown reduction {self.reduction!r}", "reduction")

    def to_dict(self) -> dict:
        return {"lam": self.lam, "c": self.c, "use_ind": self.use_ind,
                "use_tot": self.use_tot, "reduction": self.reduction}


@dataclass(frozen=True)
class LossBreakdown:
    l_ind: float
    l_tot: float
    l_total: float
    per_criterion: np.ndarray
    per_pair: np.ndarray


def _relu(x):
    return np.maximum(x, 0.0)


def _check(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite value in loss input")


def ind_arguments(gap: np.ndarray, m: np.ndarray, c: float) -> np.ndarray:
    """ReLU arguments of the per-criterion terms (same shape as ``gap``)."""
    return np.where(m > 0, m - gap, np.where(m < 0, gap - m, np.abs(gap) - c))


def l_ind(r_w, r_l, sub_margins, c: float = 1e-2) -> tuple[float, np.ndarray]:
    r_w, r_l, m = (np.asarray(a, dtype=float) for a in (r_w, r_l, sub_margins))
    if not (r_w.shape == r_l.shape == m.shape) or r_w.ndim != 1:
        raise StructuralError(f"shape mismatch {r_w.shape}, {r_l.shape}, {m.shape}")
    _check(r_w, r_l, m)
    terms = _relu(ind_arguments(r_w - r_l, m, c))
    return float(terms.mean()), terms


def l_tot(r_w, r_l, total_margin: float) -> float:
    r_w, r_l = np.asarray(r_w, dtype=float), np.asarray(r_l, dtype=float)
    if r_w.shape != r_l.shape:
        raise StructuralError(f"shape mismatch {r_w.shape}, {r_l.shape}")
    _check(r_w, r_l, np.asarray(total_margin))
    if not total_margin > 0:
        raise ValidationError(f"total margin must be > 0, got {total_margin}")
    return float(_relu(total_margin - (r_w.sum() - r_l.sum())))


def mre_arrays(Rw: np.ndarray, Rl: np.ndarray, M: np.ndarray, Mtot: np.ndarray,
               config: LossConfig = LossConfig(), grad: bool = True):
    """Batch loss on arrays: ``Rw, Rl, M`` are (K, N), ``Mtot`` is (K,).

    Returns ``(breakdown, dRw, dRl)``; the gradients are ``None`` when
    ``grad`` is false.
    """
    Rw, Rl, M, Mtot = (np.asarray(a, dtype=float) for a in (Rw, Rl, M, Mtot))
    if Rw.ndim != 2 or Rw.shape != Rl.shape or Rw.shape != M.shape \
            or Mtot.shape != (Rw.shape[0],):
        raise StructuralError(
            f"shape mismatch Rw{Rw.shape} Rl{Rl.shape} M{M.shape} Mtot{Mtot.shape}")
    if Rw.shape[0] == 0:
        raise ValidationError("batch must be non-empty")
    _check(Rw, Rl, M, Mtot)
    if np.any(Mtot <= 0):
        raise ValidationError("every total margin must be > 0")
    K, N = Rw.shape
    gap = Rw - Rl
    a_ind = ind_arguments(gap, M, config.c)
    terms = _relu(a_ind)
    ind = terms.mean(axis=1)
    a_tot = Mtot - (Rw.sum(axis=1) - Rl.sum(axis=1))
    tot = _relu(a_tot)
    w_ind = 1.0 if config.use_ind else 0.0
    w_tot = config.lam if config.use_tot else 0.0
    per_pair = w_ind * ind + w_tot * tot
    scale = 1.0 / K if config.reduction == "mean" else 1.0
    # fixed summation order over pairs
    breakdown = LossBreakdown(
        l_ind=float(np.sum(ind) * scale),
        l_tot=float(np.sum(tot) * scale),
        l_total=float(np.sum(per_pair) * scale),
        per_criterion=terms.sum(axis=0) * scale,
        per_pair=per_pair,
    )
    if not grad:
        return breakdown, None, None
    d_arg = np.where(M > 0, -1.0, np.where(M < 0, 1.0, np.sign(gap)))
    dgap = w_ind * (a_ind > 0) * d_arg / N
    dgap = dgap - w_tot * (a_tot > 0)[:, None]
    dgap = dgap * scale
    return breakdown, dgap, -dgap


def _stack(batch):
    if not batch:
        raise ValidationError("batch must be non-empty")
    M = np.array([p.sub_margins for p, _, _ in batch], dtype=float)
    Mtot = np.array([p.total_margin for p, _, _ in batch], dtype=float)
    Rw = np.array([np.asarray(getattr(r, "values", r), dtype=float) for _, r, _ in batch])
    Rl = np.array([np.asarray(getattr(r, "values", r), dtype=float) for _, _, r in batch])
    return Rw, Rl, M, Mtot


def mre_loss(batch, config: LossConfig = LossConfig()) -> LossBreakdown:
    """Loss over ``(pair, r_w, r_l)`` triples."""
    return mre_arrays(*_stack(batch), config, grad=False)[0]


def mre_grad(batch, config: LossConfig = LossConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Gradients with respect to the stacked accepted and rejected rewards."""
    _, dRw, dRl = mre_arrays(*_stack(batch), config, grad=True)
    return dRw, dRl
