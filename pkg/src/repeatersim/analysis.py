"""Estimators over coincidence counts with Poissonian counting errors.

Every count is treated as an independent Poisson variable and errors are
propagated to first order, which reproduces the usual multinomial standard
error of a correlation function.  The CHSH combination is taken as the
maximum over the four canonical sign placements (exactly one negated
term), which makes the result independent of which analyzer setting is
called primed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

TSIRELSON = 2.0 * sqrt(2.0)

#: CHSH sign placements: exactly one of the four correlators is negated.
CHSH_SIGN_PATTERNS = (
    (-1, 1, 1, 1),
    (1, -1, 1, 1),
    (1, 1, -1, 1),
    (1, 1, 1, -1),
)


def werner_chsh_threshold() -> float:
    """Fidelity to the target Bell state above which a Werner state violates CHSH."""
    return (1.0 + 3.0 / sqrt(2.0)) / 4.0


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    stderr: float
    n_total: int

    def __post_init__(self):
        if self.stderr < 0.0:
            raise ValueError("stderr must be >= 0")
        if abs(self.value) > 1.0 + 3.0 * self.stderr + 1e-12:
            raise ValueError(
                f"correlation {self.value!r} outside sanity bound for stderr {self.stderr!r}"
            )


@dataclass(frozen=True)
class CHSHResult:
    s: float
    stderr: float
    settings: tuple
    sign_pattern: tuple
    correlations: tuple

    def __post_init__(self):
        if self.s > TSIRELSON + 3.0 * self.stderr + 1e-9:
            raise ValueError(f"S = {self.s!r} exceeds the quantum bound sanity check")

    @property
    def violation_sigma(self) -> float:
        """How many standard errors S sits above the classical bound of 2."""
        if self.stderr == 0.0:
            return float("inf") if self.s > 2.0 else float("-inf")
        return (self.s - 2.0) / self.stderr


@dataclass(frozen=True)
class VisibilityEstimate:
    value: float
    stderr: float

    @property
    def bell_capable(self) -> bool:
        return self.value > 1.0 / sqrt(2.0)


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    stderr: float
    e_xx: float
    e_yy: float
    e_zz: float

    def __post_init__(self):
        recomputed = (1.0 + self.e_xx - self.e_yy + self.e_zz) / 4.0
        if abs(recomputed - self.value) > 1e-12:
            raise ValueError("fidelity inconsistent with its stored correlations")


def correlation(n_pp: float, n_pm: float, n_mp: float, n_mm: float) -> CorrelationEstimate:
    """E = (n_pp + n_mm - n_pm - n_mp)/total with Poissonian error propagation."""
    counts = (n_pp, n_pm, n_mp, n_mm)
    if any(c < 0 for c in counts):
        raise ValueError("counts must be nonnegative")
    total = float(sum(counts))
    if total <= 0:
        raise ValueError("correlation needs a positive total count")
    value = (n_pp + n_mm - n_pm - n_mp) / total
    var = ((1.0 - value) ** 2 * (n_pp + n_mm) + (1.0 + value) ** 2 * (n_pm + n_mp)) / total ** 2
    return CorrelationEstimate(value=float(value), stderr=float(sqrt(var)),
                               n_total=int(round(total)))


def chsh_s(estimates, settings) -> CHSHResult:
    """Best single-negation CHSH combination of four correlation estimates."""
    estimates = tuple(estimates)
    if len(estimates) != 4:
        raise ValueError("CHSH needs exactly four correlation estimates")
    values = np.array([e.value for e in estimates])
    best = None
    for pattern in CHSH_SIGN_PATTERNS:
        s = float(abs(np.dot(pattern, values)))
        if best is None or s > best[0]:
            best = (s, pattern)
    stderr = float(sqrt(sum(e.stderr ** 2 for e in estimates)))
    return CHSHResult(s=best[0], stderr=stderr, settings=tuple(tuple(s) for s in settings),
                      sign_pattern=best[1], correlations=tuple(float(v) for v in values))


def visibility(c_max: float, c_min: float) -> VisibilityEstimate:
    """Interference contrast from aligned/anti-aligned coincidence counts."""
    if c_max < 0 or c_min < 0:
        raise ValueError("counts must be nonnegative")
    total = c_max + c_min
    if total <= 0:
        raise ValueError("visibility needs a positive total count")
    value = (c_max - c_min) / total
    var = 4.0 * c_max * c_min / total ** 3
    return VisibilityEstimate(value=float(value), stderr=float(sqrt(var)))


def fidelity_from_settings(counts_diag, counts_rect, counts_circ) -> FidelityEstimate:
    """Bell-state fidelity from the three conjugate-basis count quadruples.

    counts_diag are the (pp, pm, mp, mm) four-fold counts in the +/- basis,
    counts_rect in the H/V basis and counts_circ in the circular basis; the
    target-state overlap is (1 + E_diag - E_circ + E_rect)/4.
    """
    for counts in (counts_diag, counts_rect, counts_circ):
        if counts is None or len(counts) != 4:
            raise ValueError("each basis needs its four outcome counts")
    e_xx = correlation(*counts_diag)
    e_zz = correlation(*counts_rect)
    e_yy = correlation(*counts_circ)
    value = (1.0 + e_xx.value - e_yy.value + e_zz.value) / 4.0
    stderr = sqrt(e_xx.stderr ** 2 + e_yy.stderr ** 2 + e_zz.stderr ** 2) / 4.0
    return FidelityEstimate(value=float(value), stderr=float(stderr),
                            e_xx=e_xx.value, e_yy=e_yy.value, e_zz=e_zz.value)
