"""One site's atomic-ensemble source.

A weak write pulse drives two collective excitation modes L and R.  Each
mode emits a photon-number-correlated (anti-Stokes photon, stored spin
excitation) pair with thermal statistics: the |n, n> amplitude scales as
chi**(n/2), which fixes the double-excitation weight the low-gain limit
implies.  Combining the two anti-Stokes paths on a polarizing splitter
turns the pair of modes into one dual-rail photonic qubit entangled with
the dual-rail memory qubit; reading the memory out later produces the
Stokes photon with the same polarization mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channels
from .qstate import (
    DensityOperator,
    LabeledState,
    bosonic_mode,
    permute,
    apply,
    unitary_map,
)

# photon-number tail allowed to fall outside the truncated space
TRUNCATION_DEFICIT_TOL = 1e-3

SITE_I = "I"
SITE_II = "II"


@dataclass
class EnsembleParams:
    """Source description: excitation amplitude, path phases, loss budget."""

    chi: float
    phi1: float = 0.0
    phi2: float = 0.0
    eta_as: float = 1.0
    eta_ret: float = 1.0
    eta_s: float = 1.0
    truncation: int = 2
    chi_l: Optional[float] = None
    chi_r: Optional[float] = None
    depol_weight: float = 0.0
    phase_jitter_std: float = 0.0
    single_excitation_only: bool = False

    def __post_init__(self):
        if self.truncation < 2:
            raise ValueError("truncation must be >= 2 so double excitations are representable")
        for name in ("eta_as", "eta_ret", "eta_s"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {val!r}")
        if not 0.0 <= self.depol_weight <= 1.0:
            raise ValueError(f"depol_weight must be in [0,1], got {self.depol_weight!r}")
        if self.phase_jitter_std < 0.0:
            raise ValueError("phase_jitter_std must be >= 0")
        for chi in self.mode_chis():
            if not 0.0 <= chi <= 0.2:
                raise ValueError(f"chi must be in [0, 0.2], got {chi!r}")
        deficit = 1.0 - float(
            np.prod([1.0 - chi ** (self.truncation + 1) for chi in self.mode_chis()])
        )
        if deficit >= TRUNCATION_DEFICIT_TOL:
            raise ValueError(
                f"truncated photon-number tail {deficit:.2e} exceeds {TRUNCATION_DEFICIT_TOL}; "
                "raise truncation or lower chi"
            )

    def mode_chis(self) -> tuple:
        return (
            self.chi if self.chi_l is None else self.chi_l,
            self.chi if self.chi_r is None else self.chi_r,
        )


@dataclass
class AtomPhotonState:
    """Joint photon+memory state of one site, register (as_l, as_r, mem_l, mem_r)."""

    state: LabeledState
    site: str


def mode_name(site: str, part: str) -> str:
    return f"{site}.{part}"


def write_register(site: str, truncation: int) -> tuple:
    return tuple(
        bosonic_mode(mode_name(site, part), truncation)
        for part in ("as_l", "as_r", "mem_l", "mem_r")
    )


def dual_rail_register(site: str, truncation: int) -> tuple:
    return tuple(
        bosonic_mode(mode_name(site, part), truncation)
        for part in ("as_h", "as_v", "mem_l", "mem_r")
    )


def _two_mode_amplitudes(chi: float, truncation: int) -> np.ndarray:
    """Amplitudes over (n_photon, n_spin); only n,n entries are populated."""
    d = truncation + 1
    amp = np.zeros((d, d), dtype=complex)
    weights = np.array([chi ** (n / 2.0) for n in range(d)]) if chi > 0 else None
    if weights is None:
        amp[0, 0] = 1.0
        return amp
    weights = weights / np.linalg.norm(weights)
    for n in range(d):
        amp[n, n] = weights[n]
    return amp


def write_joint_state(params: EnsembleParams, site: str = SITE_I) -> AtomPhotonState:
    """Two-mode write state of one site; normalized after truncation."""
    chi_l, chi_r = params.mode_chis()
    d = params.truncation + 1
    amp_l = _two_mode_amplitudes(chi_l, params.truncation)
    amp_r = _two_mode_amplitudes(chi_r, params.truncation)
    # joint over (as_l, mem_l, as_r, mem_r), then reorder
    joint = np.einsum("ab,cd->abcd", amp_l, amp_r)
    joint = joint.transpose(0, 2, 1, 3)  # (as_l, as_r, mem_l, mem_r)
    register = write_register(site, params.truncation)
    state = LabeledState(register, joint.reshape(-1), normalized=False)
    if params.single_excitation_only:
        occ = joint.copy()
        for nl in range(d):
            for nr in range(d):
                if nl + nr > 1:
                    occ[nl, nr, :, :] = 0.0
        state = LabeledState(register, occ.reshape(-1), normalized=False)
    state = state.unit()
    return AtomPhotonState(state=state, site=site)


def combine_anti_stokes(aps: AtomPhotonState, params: EnsembleParams) -> LabeledState:
    """Overlap the two anti-Stokes paths into one dual-rail polarization output.

    The R-path photon becomes the H component and the L-path photon the V
    component, each L-path photon carrying the propagation phase phi1.
    """
    st = aps.state
    expected = tuple(mode_name(aps.site, p) for p in ("as_l", "as_r", "mem_l", "mem_r"))
    if tuple(m.name for m in st.register) != expected:
        raise ValueError(f"expected write-state register {expected}")
    dims = st.dims
    amp = st.amplitudes.reshape(dims)
    # out[n_h, n_v, ...] = e^{i phi1 n_v} * in[n_l = n_v, n_r = n_h, ...]
    out = amp.transpose(1, 0, 2, 3).copy()
    phases = np.exp(1j * params.phi1 * np.arange(dims[0]))
    out *= phases[None, :, None, None]
    register = dual_rail_register(aps.site, params.truncation)
    return LabeledState(register, out.reshape(-1), normalized=st.normalized)


def retrieve(mem_state: DensityOperator, params: EnsembleParams, site: str = SITE_I) -> DensityOperator:
    """Convert one site's stored excitations into the Stokes field.

    mem_r maps to the H polarization and mem_l to V with phase phi2 per
    photon; each excitation then survives retrieval with probability
    eta_ret (pure loss).  Stokes collection/detection loss eta_s is a
    separate downstream channel, applied by the caller.
    """
    names = [m.name for m in mem_state.register]
    l_name = mode_name(site, "mem_l")
    r_name = mode_name(site, "mem_r")
    if l_name not in names or r_name not in names:
        raise ValueError(f"register lacks memory modes of site {site}: {names}")
    l_mode = mem_state.register[names.index(l_name)]
    r_mode = mem_state.register[names.index(r_name)]
    # phase per retrieved V photon, applied while the excitation is still atomic
    phase = np.diag(np.exp(1j * params.phi2 * np.arange(l_mode.dim)))
    rho = apply(unitary_map(phase, (l_name,)), mem_state)
    # relabel in place: occupations are untouched
    new_register = []
    for m in rho.register:
        if m.name == l_name:
            new_register.append(bosonic_mode(mode_name(site, "s_v"), m.dim - 1))
        elif m.name == r_name:
            new_register.append(bosonic_mode(mode_name(site, "s_h"), m.dim - 1))
        else:
            new_register.append(m)
    rho = DensityOperator(tuple(new_register), rho.matrix, normalized=rho.normalized)
    # canonical order: H rail before V rail
    order = [m.name for m in rho.register]
    ih, iv = order.index(mode_name(site, "s_h")), order.index(mode_name(site, "s_v"))
    if ih > iv:
        order[ih], order[iv] = order[iv], order[ih]
        rho = permute(rho, order)
    for part in ("s_h", "s_v"):
        mode = next(m for m in rho.register if m.name == mode_name(site, part))
        rho = apply(channels.loss_channel(mode, params.eta_ret), rho)
    return rho


def excitation_sectors(state: LabeledState, site: str) -> dict:
    """Split a site state by total stored-excitation number (unnormalized parts)."""
    names = [m.name for m in state.register]
    pos = [names.index(mode_name(site, p)) for p in ("mem_l", "mem_r")]
    dims = state.dims
    amp = state.amplitudes.reshape(dims)
    occ_l = np.arange(dims[pos[0]])
    occ_r = np.arange(dims[pos[1]])
    shape_l = [1] * len(dims)
    shape_l[pos[0]] = dims[pos[0]]
    shape_r = [1] * len(dims)
    shape_r[pos[1]] = dims[pos[1]]
    total = occ_l.reshape(shape_l) + occ_r.reshape(shape_r)
    sectors = {}
    for n in range(int(total.max()) + 1):
        comp = np.where(total == n, amp, 0.0)
        weight = float(np.linalg.norm(comp))
        if weight > 1e-15:
            sectors[n] = LabeledState(state.register, comp.reshape(-1), normalized=False)
    return sectors


def eq_dual_rail_target(site: str, phase: float, truncation: int) -> LabeledState:
    """(|H>|R> + e^{i phase}|V>|L>)/sqrt(2) over (as_h, as_v, mem_l, mem_r)."""
    register = dual_rail_register(site, truncation)
    d = truncation + 1
    amp = np.zeros((d, d, d, d), dtype=complex)
    amp[1, 0, 0, 1] = 1.0 / np.sqrt(2.0)
    amp[0, 1, 1, 0] = np.exp(1j * phase) / np.sqrt(2.0)
    return LabeledState(register, amp.reshape(-1))


def pair_target(register, phase: float = 0.0) -> LabeledState:
    """(|HH> + e^{i phase}|VV>)/sqrt(2) over two dual-rail pairs (h1, v1, h2, v2)."""
    dims = tuple(m.dim for m in register)
    amp = np.zeros(dims, dtype=complex)
    amp[1, 0, 1, 0] = 1.0 / np.sqrt(2.0)
    amp[0, 1, 0, 1] = np.exp(1j * phase) / np.sqrt(2.0)
    return LabeledState(tuple(register), amp.reshape(-1))
