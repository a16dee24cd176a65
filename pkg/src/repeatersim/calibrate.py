"""Noise calibration against the quoted benchmark visibilities.

Two knobs are fitted, in this order:

1. the per-site white-noise weight on the photonic qubit, set so the
   simulated zero-storage photon/retrieved-photon visibility of one site
   hits its target (0.92 by default);
2. the memory channel (v0, tau), set so the two-site verified visibility
   passes exactly through two anchor points: 0.799 at 0.5 us (the quoted
   S parameter divided by 2*sqrt(2)) and the Bell threshold 1/sqrt(2) at
   4.5 us.  Both anchors are derived quantities, not direct measurements.

The anchor fit inverts the exact engine: for each anchor it root-finds the
uniform attenuation that reproduces the anchored visibility, then maps the
two attenuations onto the exponential law.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, log, sqrt

from . import source
from .exact import DIAG, StationParams, joint_outcome_probs, run_pipeline, site_density
from .optics import Analyzer, Detector, analyzer_outcome_povms
from .protocol import MemoryChannel, entanglement_swap_exact
from .qstate import measure_project

ANCHOR_EARLY = (0.5, 0.799)          # S = 2.26 over 2*sqrt(2)
ANCHOR_LATE = (4.5, 1.0 / sqrt(2.0))  # Bell threshold crossing
ATOM_PHOTON_TARGET = 0.92


def atom_photon_visibility(params: source.EnsembleParams) -> float:
    """Diagonal-basis visibility between one site's photon and its readout.

    Zero-storage figure: the memory is read out immediately, so this
    isolates source quality (excitation statistics, white noise, jitter)
    from storage decoherence.
    """
    rho = site_density(params, source.SITE_I)
    rho = source.retrieve(rho, params, source.SITE_I)
    from . import channels
    from .qstate import apply

    for part in ("s_h", "s_v"):
        mode = next(m for m in rho.register if m.name == f"I.{part}")
        rho = apply(channels.loss_channel(mode, params.eta_s), rho)
    det = Detector()
    probs = {}
    for o1 in ("plus", "minus"):
        for o2 in ("plus", "minus"):
            state = rho
            weight = 1.0
            for prefix, outcome in (("I.as_", o1), ("I.s_", o2)):
                modes = [m for m in state.register if m.name.startswith(prefix)]
                povms = analyzer_outcome_povms(DIAG, modes, det, det)
                p, state = measure_project(state, povms[outcome])
            probs[(o1, o2)] = state.trace()
    total = sum(probs.values())
    aligned = probs[("plus", "plus")] + probs[("minus", "minus")]
    return (2.0 * aligned - total) / total


def depol_weight_for_visibility(base: source.EnsembleParams,
                                target: float = ATOM_PHOTON_TARGET) -> float:
    """White-noise weight reproducing the target atom-photon visibility.

    The weight acts linearly on the visibility (Bloch shrink by 1-w), so a
    single clean-source evaluation fixes it; a verification pass guards the
    multi-photon residue.
    """
    clean = source.EnsembleParams(**{**base.__dict__, "depol_weight": 0.0})
    v0 = atom_photon_visibility(clean)
    if target > v0:
        raise ValueError(f"target visibility {target} above the clean-source value {v0}")
    weight = 1.0 - target / v0
    check = atom_photon_visibility(
        source.EnsembleParams(**{**base.__dict__, "depol_weight": weight})
    )
    if abs(check - target) > 1e-9:
        # one secant correction handles any multi-photon nonlinearity
        weight += (check - target) * (weight / max(1.0 - check / v0, 1e-12) - 1.0)
        check = atom_photon_visibility(
            source.EnsembleParams(**{**base.__dict__, "depol_weight": weight})
        )
        if abs(check - target) > 1e-6:
            raise RuntimeError("atom-photon visibility calibration did not converge")
    return float(weight)


def verified_visibility_at_lambda(site_i: source.EnsembleParams,
                                  site_ii: source.EnsembleParams,
                                  station_params: StationParams, lam: float) -> float:
    """Two-site verified diagonal visibility at a uniform memory attenuation."""
    state = run_pipeline(site_i, site_ii, station_params,
                         MemoryChannel(tau=1.0), 0.0, memory_lambda=lam)
    probs = joint_outcome_probs(state.rho_pair, DIAG, DIAG, station_params.dark_prob)
    total = sum(probs.values())
    return (probs["pp"] + probs["mm"] - probs["pm"] - probs["mp"]) / total


def _invert_visibility(site_i, site_ii, station_params, target: float) -> float:
    lo, hi = 0.0, 1.0
    v_hi = verified_visibility_at_lambda(site_i, site_ii, station_params, 1.0)
    if target > v_hi:
        raise ValueError(
            f"anchor visibility {target} above the zero-storage value {v_hi:.4f}"
        )
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if verified_visibility_at_lambda(site_i, site_ii, station_params, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def memory_channel_from_anchors(site_i: source.EnsembleParams,
                                site_ii: source.EnsembleParams,
                                station_params: StationParams,
                                early=ANCHOR_EARLY, late=ANCHOR_LATE) -> MemoryChannel:
    """Exponential memory channel through two (time, visibility) anchors."""
    (t1, v1), (t2, v2) = early, late
    lam1 = _invert_visibility(site_i, site_ii, station_params, v1)
    lam2 = _invert_visibility(site_i, site_ii, station_params, v2)
    if not lam2 < lam1 < 1.0:
        raise ValueError(f"anchor attenuations not ordered: {lam1}, {lam2}")
    tau = (t2 - t1) / log(lam1 / lam2)
    v0 = lam1 * exp(t1 / tau)
    if not 0.0 < v0 <= 1.0:
        raise ValueError(f"anchor fit left the physical range: v0 = {v0}")
    return MemoryChannel(model="exponential", tau=float(tau), v0=float(v0))
