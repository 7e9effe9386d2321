"""Masked interaction loss and the combined training objective.

The interaction term restricts a pixel-wise surrogate loss (cross-entropy,
mean squared error, or soft Dice) to the critical sites flagged by detection;
the combined objective adds it to the usual cross-entropy + Dice mixture with
scalar weights. Gradients with respect to the likelihood map are analytic,
with the critical mask and the argmax discretization treated as constants.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .detect import detect
from .grid import BinaryMask, LabelGrid, LikelihoodGrid, argmax_labels

SURROGATES = ("CE", "MSE", "DICE")

CE_PROB_FLOOR = 1e-12

# default interaction weights per dimensionality; exposed, not contractual
DEFAULT_LAMBDA_TI = {2: 1e-4, 3: 1e-6}


@dataclass(frozen=True)
class LossConfig:
    surrogate: str = "CE"
    lambda_dice: float = 1.0
    lambda_ti: float = 1e-4
    dice_smoothing: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "surrogate", str(self.surrogate).upper())
        if self.surrogate not in SURROGATES:
            raise ValueError(f"surrogate must be one of {SURROGATES}, got {self.surrogate!r}")
        if not (self.dice_smoothing > 0):
            raise ValueError("dice_smoothing must be positive")
        for name in ("lambda_dice", "lambda_ti"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative weight, got {v}")

    @classmethod
    def defaults(cls, ndim: int, surrogate: str = "CE") -> "LossConfig":
        return cls(surrogate=surrogate, lambda_ti=DEFAULT_LAMBDA_TI[ndim])


@dataclass(frozen=True)
class LossReport:
    l_ce: float
    l_dice: float
    l_ti: float
    l_total: float
    gradient: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "l_ce": self.l_ce,
            "l_dice": self.l_dice,
            "l_ti": self.l_ti,
            "l_total": self.l_total,
        }


def _check_shapes(f: LikelihoodGrid, g: LabelGrid):
    if f.dims != g.dims:
        raise ValueError(f"likelihood dims {f.dims} do not match label dims {g.dims}")
    if f.num_classes != g.num_classes:
        raise ValueError(
            f"likelihood has {f.num_classes} classes, labels have {g.num_classes}"
        )


def _one_hot_f64(g: LabelGrid) -> np.ndarray:
    y = np.zeros((g.num_classes,) + g.dims, dtype=np.float64)
    idx = np.indices(g.dims)
    y[(g.labels.astype(np.intp),) + tuple(idx)] = 1.0
    return y


def _target_probs(fv: np.ndarray, g: LabelGrid) -> np.ndarray:
    idx = np.indices(g.dims)
    return fv[(g.labels.astype(np.intp),) + tuple(idx)]


def _ce_terms(probs: np.ndarray, context: str):
    low = probs < CE_PROB_FLOOR
    if low.any():
        warnings.warn(
            f"log-domain underflow in {context}: {int(low.sum())} site(s) at or below "
            f"the {CE_PROB_FLOOR:g} probability floor",
            RuntimeWarning,
            stacklevel=3,
        )
    return -np.log(np.maximum(probs, CE_PROB_FLOOR)), low


def _masked_ce(fv, g, sel, want_grad, context="masked cross-entropy"):
    m = int(np.count_nonzero(sel))
    grad = np.zeros_like(fv) if want_grad else None
    if m == 0:
        return 0.0, grad
    probs = _target_probs(fv, g)
    terms, low = _ce_terms(probs[sel], context)
    loss = float(terms.sum() / m)
    if want_grad:
        # d(-log f_g)/df is zero below the floor (clamped region)
        coeff = np.where(sel & ~_scatter(low, sel, g.dims), -1.0 / (m * np.maximum(probs, CE_PROB_FLOOR)), 0.0)
        idx = np.indices(g.dims)
        grad[(g.labels.astype(np.intp),) + tuple(idx)] = coeff
    return loss, grad


def _scatter(vals_at_sel: np.ndarray, sel: np.ndarray, dims) -> np.ndarray:
    out = np.zeros(dims, dtype=bool)
    out[sel] = vals_at_sel
    return out


def _masked_mse(fv, g, sel, want_grad):
    m = int(np.count_nonzero(sel))
    grad = np.zeros_like(fv) if want_grad else None
    if m == 0:
        return 0.0, grad
    diff = fv - _one_hot_f64(g)
    c = fv.shape[0]
    loss = float((diff[:, sel] ** 2).sum() / (m * c))
    if want_grad:
        grad[:, sel] = 2.0 * diff[:, sel] / (m * c)
    return loss, grad


def _masked_dice(fv, g, sel, eps, want_grad):
    """1 - mean over classes of per-class soft Dice on the selected sites,
    with squared probabilities in the denominator and eps smoothing."""
    c = fv.shape[0]
    grad = np.zeros_like(fv) if want_grad else None
    if not sel.any():
        return 0.0, grad
    y = _one_hot_f64(g)
    fs = fv[:, sel]
    ys = y[:, sel]
    num = 2.0 * (fs * ys).sum(axis=1) + eps
    den = (fs ** 2).sum(axis=1) + ys.sum(axis=1) + eps
    loss = float(1.0 - (num / den).mean())
    if want_grad:
        # d dice_k / d f = (2 y den - num 2 f) / den^2, averaged over classes
        d = (2.0 * ys * den[:, None] - num[:, None] * 2.0 * fs) / den[:, None] ** 2
        grad[:, sel] = -d / c
    return loss, grad


def _masked_surrogate(fv, g, sel, surrogate, eps, want_grad):
    if surrogate == "CE":
        return _masked_ce(fv, g, sel, want_grad)
    if surrogate == "MSE":
        return _masked_mse(fv, g, sel, want_grad)
    return _masked_dice(fv, g, sel, eps, want_grad)


def masked_loss(f: LikelihoodGrid, g: LabelGrid, mask: BinaryMask, surrogate: str,
                dice_smoothing: float = 1e-5) -> float:
    """Surrogate loss restricted to the masked sites (0 when the mask is empty).

    The mask is a constant: no sensitivity flows through it. CE expects a
    normalized likelihood; probabilities at or below 1e-12 are floored and
    reported as a log-domain underflow warning.
    """
    value, _ = masked_loss_with_gradient(f, g, mask, surrogate, dice_smoothing,
                                         want_gradient=False)
    return value


def masked_loss_with_gradient(f: LikelihoodGrid, g: LabelGrid, mask: BinaryMask,
                              surrogate: str, dice_smoothing: float = 1e-5,
                              want_gradient: bool = True):
    surrogate = str(surrogate).upper()
    if surrogate not in SURROGATES:
        raise ValueError(f"surrogate must be one of {SURROGATES}, got {surrogate!r}")
    _check_shapes(f, g)
    if mask.dims != g.dims:
        raise ValueError(f"mask dims {mask.dims} do not match grid dims {g.dims}")
    fv = f.values.astype(np.float64)
    loss, grad = _masked_surrogate(fv, g, mask.bits, surrogate, dice_smoothing,
                                   want_gradient)
    return loss, grad


def total_loss(f: LikelihoodGrid, g: LabelGrid, cs: ConstraintSet, conn,
               cfg: LossConfig, want_gradient: bool = False) -> LossReport:
    """Combined objective: cross-entropy + weighted global Dice + weighted
    interaction term on the critical sites of the discretized prediction.

    The critical mask comes from detecting on argmax(f); both the mask and
    the discretization are constants for the gradient.
    """
    _check_shapes(f, g)
    fv = f.values.astype(np.float64)
    v = detect(argmax_labels(f), cs, conn).mask

    all_sites = np.ones(g.dims, dtype=bool)
    l_ce, g_ce = _masked_ce(fv, g, all_sites, want_gradient, context="cross-entropy")
    l_dice, g_dice = _masked_dice(fv, g, all_sites, cfg.dice_smoothing, want_gradient)
    l_ti, g_ti = _masked_surrogate(fv, g, v.bits, cfg.surrogate, cfg.dice_smoothing,
                                   want_gradient)
    grad = None
    if want_gradient:
        grad = g_ce + cfg.lambda_dice * g_dice + cfg.lambda_ti * g_ti
    return LossReport(
        l_ce=l_ce,
        l_dice=l_dice,
        l_ti=l_ti,
        l_total=l_ce + cfg.lambda_dice * l_dice + cfg.lambda_ti * l_ti,
        gradient=grad,
    )
