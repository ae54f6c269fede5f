"""Precision policies: when the preconditioner runs in low precision.

Four policies cover the space:

- uniform: every application in work precision (float64).
- fixed-low: every application in low precision (float32); the residual is
  narrowed on the way in, the correction widened on the way out.
- adaptive-hl: high while the relative residual is still >= adp_tol, low
  once it drops below (high early, low late).
- adaptive-lh: low while the relative residual is >= adp_tol, high after
  (low early, high late).

The adaptive rules compare with >=, so the limits line up exactly:
adaptive-hl with adp_tol -> inf is fixed-low, with adp_tol -> 0+ uniform;
adaptive-lh swaps the two. Branch choice depends only on (kind, adp_tol,
relres), never on iteration count or history.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import bjac
from .sparse import Precision, SparseMatrix, convert_precision


class PolicyKind(enum.Enum):
    UNIFORM = "uniform"
    FIXED_LOW = "fixed-low"
    ADAPTIVE_HL = "adaptive-hl"
    ADAPTIVE_LH = "adaptive-lh"

    def __str__(self) -> str:
        return self.value


DEFAULT_ADP_TOL = {
    PolicyKind.ADAPTIVE_HL: 10.0,
    PolicyKind.ADAPTIVE_LH: 1e-5,
}

_ADAPTIVE = (PolicyKind.ADAPTIVE_HL, PolicyKind.ADAPTIVE_LH)


@dataclass(frozen=True)
class PrecisionPolicy:
    """Policy kind plus its switching threshold (adaptive kinds only)."""

    kind: PolicyKind
    adp_tol: float | None = None
    work: Precision = Precision.F64
    low: Precision = Precision.F32

    def __post_init__(self):
        if self.kind in _ADAPTIVE:
            if self.adp_tol is None:
                object.__setattr__(self, "adp_tol",
                                   DEFAULT_ADP_TOL[self.kind])
            elif not (self.adp_tol > 0):
                raise ValueError("adp_tol must be positive")
        elif self.adp_tol is not None:
            raise ValueError(f"{self.kind} takes no adp_tol")
        if self.work is not Precision.F64 or self.low is not Precision.F32:
            raise ValueError("work precision must be f64 and low f32")

    @classmethod
    def parse(cls, text: str) -> "PrecisionPolicy":
        """Parse 'uniform', 'fixed-low', or 'adaptive-hl[:tol]' forms."""
        name, sep, tol = text.strip().partition(":")
        try:
            kind = PolicyKind(name.strip().lower())
        except ValueError:
            options = ", ".join(k.value for k in PolicyKind)
            raise ValueError(f"unknown policy {name!r}, expected one of "
                             f"{options}") from None
        if not sep:
            return cls(kind)
        if kind not in _ADAPTIVE:
            raise ValueError(f"{kind} takes no adp_tol")
        try:
            return cls(kind, float(tol))
        except ValueError as exc:
            raise ValueError(f"bad adp_tol {tol!r}: {exc}") from None

    def label(self) -> str:
        if self.kind in _ADAPTIVE:
            return f"{self.kind.value}-{self.adp_tol:g}"
        return self.kind.value

    @property
    def needs_high(self) -> bool:
        return self.kind is not PolicyKind.FIXED_LOW

    @property
    def needs_low(self) -> bool:
        return self.kind is not PolicyKind.UNIFORM


def choose_branch(kind: PolicyKind, adp_tol: float | None,
                  relres: float) -> str:
    """'high' or 'low' for this application. Pure function of its inputs."""
    if not math.isfinite(relres) or relres < 0:
        raise ValueError(f"relative residual {relres!r} must be finite "
                         "and nonnegative")
    if kind is PolicyKind.UNIFORM:
        return "high"
    if kind is PolicyKind.FIXED_LOW:
        return "low"
    if adp_tol is None:
        raise ValueError("adaptive policy needs adp_tol")
    if kind is PolicyKind.ADAPTIVE_HL:
        return "high" if relres >= adp_tol else "low"
    return "low" if relres >= adp_tol else "high"


@dataclass(eq=False)
class MixedPreconditioner:
    """The preconditioner instances a policy can dispatch between."""

    policy: PrecisionPolicy
    p_high: bjac.BjacPreconditioner | None
    p_low: bjac.BjacPreconditioner | None

    @property
    def n(self) -> int:
        p = self.p_high if self.p_high is not None else self.p_low
        return p.n


def build_mixed(A: SparseMatrix, policy: PrecisionPolicy, nb: int = 32,
                k: int = 2, t: int = 2,
                partition: bjac.BlockPartition | None = None
                ) -> MixedPreconditioner:
    """Set up the high and/or low instances the policy will need.

    Both adaptive policies build both instances eagerly: the branch taken
    at any iteration depends on the run, so neither can be deferred.
    """
    if partition is None:
        partition = bjac.BlockPartition.equal_split(A.n, nb)
    p_high = p_low = None
    if policy.needs_high:
        p_high = bjac.setup(A, k=k, t=t, precision=policy.work,
                            partition=partition)
    if policy.needs_low:
        p_low = bjac.setup(A, k=k, t=t, precision=policy.low,
                           partition=partition)
    return MixedPreconditioner(policy, p_high, p_low)


def fmp_apply(mp: MixedPreconditioner, r: np.ndarray) -> tuple[np.ndarray, str]:
    """Fixed mixed application: narrow r, apply in low, widen z."""
    if mp.p_low is None:
        raise ValueError("policy has no low-precision instance")
    r_low = convert_precision(r, mp.policy.low)
    z_low = mp.p_low.apply(r_low)
    return convert_precision(z_low, mp.policy.work), "low"


def amp_apply(mp: MixedPreconditioner, r: np.ndarray,
              relres: float) -> tuple[np.ndarray, str]:
    """Adaptive application: branch on the current relative residual."""
    if mp.policy.kind not in _ADAPTIVE:
        raise ValueError(f"{mp.policy.kind} is not adaptive")
    branch = choose_branch(mp.policy.kind, mp.policy.adp_tol, relres)
    if branch == "high":
        return mp.p_high.apply(r), "high"
    z, _ = fmp_apply(mp, r)
    return z, "low"


def apply_policy(mp: MixedPreconditioner, r: np.ndarray,
                 relres: float) -> tuple[np.ndarray, str]:
    """Dispatch one preconditioner application under mp's policy."""
    kind = mp.policy.kind
    if kind is PolicyKind.UNIFORM:
        return mp.p_high.apply(r), "high"
    if kind is PolicyKind.FIXED_LOW:
        return fmp_apply(mp, r)
    return amp_apply(mp, r, relres)
