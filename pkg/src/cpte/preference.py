"""Preference functions ``w(y | y')`` over (possibly multivariate) outcomes.

Outcomes are oriented so that larger is better on every coordinate; the
``orientation`` vector flips coordinates where smaller raw values are better.
Ties are tested with exact float equality.
"""

from dataclasses import dataclass

import numpy as np

PNS = "pns_indicator"
LEXICO = "lexicographic_win"
RISK_DIFFERENCE = "risk_difference"
KINDS = (PNS, LEXICO, RISK_DIFFERENCE)

_ALIASES = {"pns": PNS, "win": LEXICO, "lexico": LEXICO, "rd": RISK_DIFFERENCE}


class UnboundedPreferenceError(ValueError):
    """Raised when a CPTE/EIF path receives a preference not bounded in [0, 1]."""


@dataclass(frozen=True)
class PreferenceFunction:
    """A comparison rule ``w(y | y')``.

    Attributes:
        kind: one of ``pns_indicator``, ``lexicographic_win``, ``risk_difference``.
        orientation: per-coordinate signs, +1 when larger is better.
        reversed: when True the arguments are swapped (the anti-preference).
    """

    kind: str = PNS
    orientation: tuple = (1,)
    reversed: bool = False

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown preference kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        orientation = tuple(int(s) for s in np.atleast_1d(self.orientation))
        if not orientation or any(s not in (1, -1) for s in orientation):
            raise ValueError(f"orientation must be a non-empty sequence of +1/-1, got {self.orientation!r}")
        if kind in (PNS, RISK_DIFFERENCE) and len(orientation) != 1:
            raise ValueError(f"{kind} is defined for scalar outcomes only (d = 1)")
        object.__setattr__(self, "orientation", orientation)

    @property
    def dim(self):
        return len(self.orientation)

    @property
    def bounded(self):
        return self.kind != RISK_DIFFERENCE

    @property
    def tie_aware(self):
        """True when ``w(y|y') + w(y'|y) = 1`` holds for every pair."""
        return self.kind == LEXICO

    def __call__(self, y, y_prime):
        """Evaluate ``w(y | y')`` with broadcasting.

        For ``dim == 1`` every array entry is a scalar outcome. For ``dim > 1`` the
        last axis holds the outcome coordinates.
        """
        a = self._as_outcomes(y)
        b = self._as_outcomes(y_prime)
        if self.reversed:
            a, b = b, a
        signs = np.asarray(self.orientation, dtype=float)
        a = a * signs
        b = b * signs
        if self.kind == RISK_DIFFERENCE:
            out = a[..., 0] - b[..., 0]
        elif self.kind == PNS:
            out = (a[..., 0] > b[..., 0]).astype(float)
        else:
            out = _lexico_win(a, b)
        if out.ndim == 0:
            return float(out)
        return out

    def _as_outcomes(self, y):
        arr = np.asarray(y, dtype=float)
        if self.dim == 1:
            # scalar outcomes: every entry is one outcome
            return arr[..., None]
        if arr.ndim == 0 or arr.shape[-1] != self.dim:
            raise ValueError(f"outcome dimension {arr.shape[-1:]} does not match preference dimension {self.dim}")
        return arr

    def reverse(self):
        return reverse(self)


def _lexico_win(a, b):
    shape = np.broadcast_shapes(a.shape, b.shape)[:-1]
    win = np.zeros(shape, dtype=bool)
    decided = np.zeros(shape, dtype=bool)
    for k in range(a.shape[-1]):
        ak, bk = a[..., k], b[..., k]
        win |= ~decided & (ak > bk)
        decided |= ak != bk
    return win.astype(float) + 0.5 * (~decided)


def reverse(w):
    """Anti-preference ``w_L(y | y') = w(y' | y)``."""
    return PreferenceFunction(w.kind, w.orientation, not w.reversed)


def require_bounded(w):
    if not w.bounded:
        raise UnboundedPreferenceError(
            f"{w.kind} is not bounded in [0, 1]; CPTE and influence-function estimators need a bounded preference"
        )


def pns(orientation=1):
    return PreferenceFunction(PNS, (orientation,))


def lexicographic_win(orientation=(1, 1)):
    return PreferenceFunction(LEXICO, tuple(orientation))


def risk_difference(orientation=1):
    return PreferenceFunction(RISK_DIFFERENCE, (orientation,))


def _scalar_pair(y, y_prime):
    a, b = np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(y_prime, float))
    if a.shape != (1,) or b.shape != (1,):
        raise ValueError(f"expected scalar outcomes, got shapes {a.shape} and {b.shape}")
    return a[0], b[0]


def eval_pns(w, y, y_prime):
    return w(*_scalar_pair(y, y_prime))


def eval_lexico_win(w, y, y_prime):
    a, b = np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(y_prime, float))
    if a.shape != b.shape or a.shape != (w.dim,):
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape} for a {w.dim}-d preference")
    if w.dim == 1:
        return w(a[0], b[0])
    return w(a, b)


def eval_risk_difference(y, y_prime, orientation=1):
    return risk_difference(orientation)(*_scalar_pair(y, y_prime))


def pair_mean(w, y1, y0):
    """Mean of ``w(y1_i | y0_j)`` over all cross pairs of two outcome samples.

    ``y1`` and ``y0`` have shape ``(m, k1[, d])`` and ``(m, k0[, d])``; the mean is
    taken per leading row. Scalar rank-based preferences use a sort-and-count path
    that is exact and avoids materialising the ``k1 * k0`` pair matrix.
    """
    y1 = np.asarray(y1, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if w.dim == 1:
        if y1.ndim == 3:
            y1, y0 = y1[..., 0], y0[..., 0]
        if w.kind != RISK_DIFFERENCE and y1.shape[1] * y0.shape[1] > 4096:
            return _rank_pair_mean(w, y1, y0)
        return w(y1[:, :, None], y0[:, None, :]).mean(axis=(1, 2))
    return w(y1[:, :, None, :], y0[:, None, :, :]).mean(axis=(1, 2))


def _rank_pair_mean(w, y1, y0):
    sign = w.orientation[0]
    a, b = sign * y1, sign * y0
    if w.reversed:
        a, b = b, a
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        bs = np.sort(b[i])
        below = np.searchsorted(bs, a[i], side="left")
        if w.kind == PNS:
            score = below.sum()
        else:
            ties = np.searchsorted(bs, a[i], side="right") - below
            score = below.sum() + 0.5 * ties.sum()
        out[i] = score / (a.shape[1] * b.shape[1])
    return out
