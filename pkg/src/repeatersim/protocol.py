"""Node-level protocol: swapping, storage decoherence, derived quantities.

The Bell coincidence on the two travelling photons projects the two remote
memories onto an entangled state; everything after that is storage
dephasing, retrieval and verification.  The exact engine keeps per-site
excitation-number bookkeeping, so the fraction of heralds caused by
double emissions (which a four-fold verification removes) is computed by
enumeration rather than estimated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import channels, source
from .optics import Analyzer, BSMStation, Detector, analyzer_outcome_povms, bsm_phi_plus_povm
from .qstate import (
    DensityOperator,
    LabeledState,
    apply,
    measure_project,
    povm_element,
)

NO_EVENT_PROB = 1e-15


class NoEventError(RuntimeError):
    """Conditioning on an event of (numerically) zero probability."""


class NodePhase(Enum):
    IDLE = "idle"
    WRITING = "writing"
    AWAIT_BSM = "await_bsm"
    STORED = "stored"
    RETRIEVED = "retrieved"
    VERIFIED = "verified"


LEGAL_TRANSITIONS = {
    (NodePhase.IDLE, NodePhase.WRITING),
    (NodePhase.WRITING, NodePhase.AWAIT_BSM),
    (NodePhase.AWAIT_BSM, NodePhase.WRITING),
    (NodePhase.AWAIT_BSM, NodePhase.STORED),
    (NodePhase.STORED, NodePhase.RETRIEVED),
    (NodePhase.RETRIEVED, NodePhase.VERIFIED),
    (NodePhase.VERIFIED, NodePhase.IDLE),
}


def validate_phase_trace(trace) -> None:
    for a, b in zip(trace, trace[1:]):
        if (a, b) not in LEGAL_TRANSITIONS:
            raise ValueError(f"illegal node phase transition {a} -> {b}")


def trial_phase_trace(bsm_success: bool, fourfold: bool) -> tuple:
    """Canonical phase sequence of one write attempt."""
    head = (NodePhase.IDLE, NodePhase.WRITING, NodePhase.AWAIT_BSM)
    if not bsm_success:
        return head + (NodePhase.WRITING,)
    tail = (NodePhase.STORED, NodePhase.RETRIEVED)
    if fourfold:
        tail = tail + (NodePhase.VERIFIED, NodePhase.IDLE)
    return head + tail


EXPONENTIAL = "exponential"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class MemoryChannel:
    """Dual-rail dephasing law of the stored excitations; times in microseconds."""

    model: str = EXPONENTIAL
    tau: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        if self.model not in (EXPONENTIAL, GAUSSIAN):
            raise ValueError(f"unknown memory model {self.model!r}")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.v0 <= 1.0:
            raise ValueError("v0 must be in (0,1]")

    def attenuation(self, dt_us: float) -> float:
        if dt_us < 0.0:
            raise ValueError("storage time must be >= 0")
        if self.model == EXPONENTIAL:
            return self.v0 * float(np.exp(-dt_us / self.tau))
        return self.v0 * float(np.exp(-((dt_us / self.tau) ** 2)))


@dataclass(frozen=True)
class SwapRecord:
    trial_id: int
    bsm_success: bool
    storage_time_us: float
    fourfold: bool
    double_excitation_flag: Optional[bool] = None

    def __post_init__(self):
        if self.fourfold and not self.bsm_success:
            raise ValueError("fourfold coincidence implies a heralding success")


@dataclass(frozen=True)
class PrecisionEstimate:
    value: float
    raw: float
    model_violation: bool


# ---------------------------------------------------------------------------
# exact swapping


def _photon_mode_labels(rho_i: DensityOperator, rho_ii: DensityOperator):
    def pair(rho, parts):
        names = {m.name: m for m in rho.register}
        return [names[n] for n in parts]

    site_i = rho_i.register[0].name.split(".")[0]
    site_ii = rho_ii.register[0].name.split(".")[0]
    ph = pair(rho_i, [f"{site_i}.as_h", f"{site_i}.as_v"]) + pair(
        rho_ii, [f"{site_ii}.as_h", f"{site_ii}.as_v"]
    )
    mem = pair(rho_i, [f"{site_i}.mem_l", f"{site_i}.mem_r"]) + pair(
        rho_ii, [f"{site_ii}.mem_l", f"{site_ii}.mem_r"]
    )
    return ph, mem


def _expect_dual_rail_order(rho: DensityOperator):
    parts = [m.name.split(".", 1)[1] for m in rho.register]
    if parts != ["as_h", "as_v", "mem_l", "mem_r"]:
        raise ValueError(
            f"site state register must be (as_h, as_v, mem_l, mem_r), got {parts}"
        )


def swap_conditional(rho_i: DensityOperator, rho_ii: DensityOperator,
                     station: BSMStation) -> DensityOperator:
    """Unnormalized memory state conditioned on the heralding coincidence.

    Contracts the station POVM with the product of the two site states
    without materializing the joint two-site operator.
    """
    _expect_dual_rail_order(rho_i)
    _expect_dual_rail_order(rho_ii)
    ph_modes, mem_modes = _photon_mode_labels(rho_i, rho_ii)
    e = bsm_phi_plus_povm(station, ph_modes).operands[0]
    p = ph_modes[0].dim * ph_modes[1].dim
    m1 = mem_modes[0].dim * mem_modes[1].dim
    m2 = mem_modes[2].dim * mem_modes[3].dim
    e4 = e.reshape(p, p, p, p)
    r1 = rho_i.matrix.reshape(p, m1, p, m1)
    r2 = rho_ii.matrix.reshape(p, m2, p, m2)
    out = np.einsum("tupq,pmtn,qrus->mrns", e4, r1, r2, optimize=True)
    mat = out.reshape(m1 * m2, m1 * m2)
    return DensityOperator(tuple(mem_modes), mat, normalized=False)


def entanglement_swap_exact(rho_i: DensityOperator, rho_ii: DensityOperator,
                            station: BSMStation):
    """Heralded swap: returns (success probability, normalized memory state)."""
    if isinstance(rho_i, LabeledState):
        rho_i = rho_i.to_density()
    if isinstance(rho_ii, LabeledState):
        rho_ii = rho_ii.to_density()
    cond = swap_conditional(rho_i, rho_ii, station)
    prob = cond.trace()
    if prob < NO_EVENT_PROB:
        raise NoEventError(f"heralding probability {prob!r} below {NO_EVENT_PROB}")
    return prob, cond.unit()


# ---------------------------------------------------------------------------
# storage decoherence


def memory_pairs(register) -> list:
    """(mem_l, mem_r) position pairs grouped by site prefix."""
    names = [m.name for m in register]
    sites = sorted({n.split(".")[0] for n in names if n.endswith(".mem_l")})
    pairs = []
    for s in sites:
        l_name, r_name = f"{s}.mem_l", f"{s}.mem_r"
        if r_name not in names:
            raise ValueError(f"site {s} has mem_l without mem_r")
        pairs.append((names.index(l_name), names.index(r_name)))
    return pairs


def _broadcast_to_axes(arr: np.ndarray, targets, total_axes: int) -> np.ndarray:
    """View a k-axis array as total_axes-dim, its axes placed at `targets`."""
    order = np.argsort(targets)
    arr = np.transpose(arr, order)
    shape = [1] * total_axes
    for pos, length in zip(sorted(targets), arr.shape):
        shape[pos] = length
    return arr.reshape(shape)


def dephase_with_factor(rho: DensityOperator, lam: float, pairs=None) -> DensityOperator:
    """Schur-multiply each dual-rail pair's coherence classes by lam powers."""
    pairs = memory_pairs(rho.register) if pairs is None else pairs
    if not pairs:
        raise ValueError("no dual-rail memory pairs in register")
    dims = rho.dims
    n = len(dims)
    tens = rho.matrix.reshape(dims + dims).copy()
    for pl, pr in pairs:
        if dims[pl] != dims[pr]:
            raise ValueError("dual-rail pair must share a truncation")
        d = dims[pl]
        factor = channels.dephasing_multiplier(d - 1, lam).reshape(d, d, d, d)
        tens *= _broadcast_to_axes(factor, (pl, pr, n + pl, n + pr), 2 * n)
    full = int(np.prod(dims))
    return DensityOperator(rho.register, tens.reshape(full, full), normalized=rho.normalized)


def decohere_memory(rho: DensityOperator, dt_us: float, ch: MemoryChannel,
                    pairs=None) -> DensityOperator:
    """Apply storage dephasing for dt microseconds to every memory pair.

    The single-excitation coherence of each site shrinks by exactly
    lambda(dt) = v0 * exp(-dt/tau) (or the gaussian variant); populations
    are untouched.  Multi-excitation coherence classes follow the
    random-phase power law of channels.dephasing_multiplier.
    """
    lam = ch.attenuation(dt_us)
    return dephase_with_factor(rho, lam, pairs=pairs)


# ---------------------------------------------------------------------------
# double-excitation accounting


def _site_sector_states(params: source.EnsembleParams, site: str) -> dict:
    aps = source.write_joint_state(params, site)
    combined = source.combine_anti_stokes(aps, params)
    return source.excitation_sectors(combined, site)


def _sector_density(component: LabeledState, eta_as: float) -> DensityOperator:
    rho = component.to_density()
    rho.normalized = False
    for mode in rho.register[:2]:  # the two photonic rails
        rho = apply(channels.loss_channel(mode, eta_as), rho)
    return rho


def retrieve_pair(rho_mem: DensityOperator, params_i: source.EnsembleParams,
                  params_ii: source.EnsembleParams) -> DensityOperator:
    """Read out both sites; register becomes (I.s_h, I.s_v, II.s_h, II.s_v)."""
    rho = source.retrieve(rho_mem, params_i, source.SITE_I)
    return source.retrieve(rho, params_ii, source.SITE_II)


def fourfold_conditioned_pair(rho_mem: DensityOperator, theta_deg: float = 45.0,
                              eta: float = 1.0) -> tuple:
    """Retrieve both memories and condition on one-port clicks at each analyzer.

    Returns (event weight, unnormalized conditioned photon-pair state); the
    input may itself be unnormalized, in which case the weight is a joint
    probability.
    """
    ideal = source.EnsembleParams(chi=0.0, eta_ret=1.0)
    pair = retrieve_pair(rho_mem, ideal, ideal)
    analyzer = Analyzer(theta_deg)
    det = Detector(eta=eta)
    for site in (source.SITE_I, source.SITE_II):
        modes = [m for m in pair.register if m.name.startswith(f"{site}.s_")]
        povms = analyzer_outcome_povms(analyzer, modes, det, det)
        single_port = povms["plus"].operands[0] + povms["minus"].operands[0]
        _, pair = measure_project(pair, povm_element(single_port, povms["plus"].acts_on))
    return pair.trace(), pair


def _fourfold_probability(rho_mem: DensityOperator, theta_deg: float, eta: float) -> float:
    return fourfold_conditioned_pair(rho_mem, theta_deg, eta)[0]


def false_event_fraction(chi_i: float, chi_ii: float, *, truncation: int = 2,
                         eta_as: float = 1.0, station: Optional[BSMStation] = None,
                         single_only_i: bool = False, single_only_ii: bool = False,
                         fourfold_conditioned: bool = False,
                         max_total_photons: Optional[int] = 2) -> float:
    """Fraction of heralding probability not from one excitation per site.

    Exact sector-by-sector enumeration of the truncated source states.  The
    default keeps only the minimal (two-photon) sectors that can produce a
    coincidence, which is the leading order in chi; pass
    max_total_photons=None for the full enumeration, where three-photon
    events add an O(chi) surplus.  A site flagged single_only keeps its
    vacuum and single-excitation amplitudes but never emits doubles (a
    post-selected ideal source).  With fourfold_conditioned=True the
    weights are the probabilities of herald plus both verification
    analyzers firing (ideal detection), which is what removes the
    double-emission events in practice.
    """
    station = station or BSMStation()
    p_i = source.EnsembleParams(chi=chi_i, truncation=truncation,
                                single_excitation_only=single_only_i)
    p_ii = source.EnsembleParams(chi=chi_ii, truncation=truncation,
                                 single_excitation_only=single_only_ii)
    sectors_i = _site_sector_states(p_i, source.SITE_I)
    sectors_ii = _site_sector_states(p_ii, source.SITE_II)
    weights = {}
    for si, comp_i in sectors_i.items():
        rho_i = _sector_density(comp_i, eta_as)
        for sj, comp_j in sectors_ii.items():
            if si + sj < 2:
                continue  # fewer than two photons can never produce the coincidence
            if max_total_photons is not None and si + sj > max_total_photons:
                continue
            rho_j = _sector_density(comp_j, eta_as)
            cond = swap_conditional(rho_i, rho_j, station)
            w = cond.trace()
            if w <= 0.0:
                continue
            if fourfold_conditioned:
                w = _fourfold_probability(cond, 45.0, 1.0)
            weights[(si, sj)] = w
    total = sum(weights.values())
    if total < NO_EVENT_PROB:
        raise NoEventError("no heralding probability at all")
    good = weights.get((1, 1), 0.0)
    return 1.0 - good / total


# ---------------------------------------------------------------------------
# local-operation precision


def estimate_local_precision(v_ap_i: float, v_ap_ii: float, v_aa: float,
                             stat_tolerance: float = 0.0) -> PrecisionEstimate:
    """Multiplicative-visibility model: v_aa = p * v_ap_i * v_ap_ii.

    Returns the inferred p clamped to [0, 1]; raw value and a
    model-violation flag (v_aa exceeding the product beyond the stated
    statistical tolerance) ride along.
    """
    for name, v in (("v_ap_i", v_ap_i), ("v_ap_ii", v_ap_ii), ("v_aa", v_aa)):
        if not 0.0 < v <= 1.0:
            raise ValueError(f"{name} must be in (0,1], got {v!r}")
    raw = v_aa / (v_ap_i * v_ap_ii)
    violation = raw > 1.0 + stat_tolerance
    return PrecisionEstimate(value=float(min(max(raw, 0.0), 1.0)), raw=float(raw),
                             model_violation=bool(violation))
