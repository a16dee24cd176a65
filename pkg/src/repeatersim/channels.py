"""Channel factories for the loss and noise processes used across the node.

All channels are expressed as Kraus families or unitary families over the
truncated Fock spaces of qstate, so they compose with the generic apply()
machinery.  The dual-rail dephasing multiplier lives here too: it is a
Schur (elementwise) multiplier rather than an explicit Kraus family, built
from a random-phase average so it is completely positive for any
attenuation in [0, 1].
"""

from __future__ import annotations

from math import comb, sqrt

import numpy as np

from .qstate import KRAUS, UNITARY, LinearMap, ModeLabel, kraus_map, unitary_map


def loss_kraus(n_max: int, eta: float) -> list:
    """Kraus family of a bosonic pure-loss channel with survival probability eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency must be in [0,1], got {eta!r}")
    d = n_max + 1
    ops = []
    for lost in range(d):
        k = np.zeros((d, d), dtype=complex)
        for n in range(lost, d):
            k[n - lost, n] = sqrt(comb(n, lost) * eta ** (n - lost) * (1.0 - eta) ** lost)
        ops.append(k)
    return ops


def loss_channel(mode: ModeLabel, eta: float) -> LinearMap:
    return kraus_map(loss_kraus(mode.dim - 1, eta), (mode.name,))


def dual_rail_pauli(which: str, n_max: int) -> np.ndarray:
    """Mode-level Pauli on an (H, V) bosonic pair, single-photon sector = qubit Pauli.

    X swaps the two occupations, Z flips the sign of odd-V kets, Y = iXZ
    photon by photon.
    """
    d = n_max + 1
    dim = d * d
    op = np.zeros((dim, dim), dtype=complex)
    for nh in range(d):
        for nv in range(d):
            col = nh * d + nv
            if which == "I":
                op[col, col] = 1.0
            elif which == "Z":
                op[col, col] = (-1.0) ** nv
            elif which == "X":
                op[nv * d + nh, col] = 1.0
            elif which == "Y":
                op[nv * d + nh, col] = (1j) ** nh * (-1j) ** nv
            else:
                raise ValueError(f"unknown Pauli {which!r}")
    return op


def depolarizing_twirl(h_mode: ModeLabel, v_mode: ModeLabel, weight: float) -> LinearMap:
    """White-noise admixture on a dual-rail pair as a random mode-Pauli channel.

    On the single-photon subspace this is the qubit depolarizing channel; the
    Bloch vector shrinks by (1 - weight).
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"depolarizing weight must be in [0,1], got {weight!r}")
    if h_mode.dim != v_mode.dim:
        raise ValueError("dual-rail modes must share a truncation")
    n_max = h_mode.dim - 1
    probs = {"I": 1.0 - 0.75 * weight, "X": 0.25 * weight, "Y": 0.25 * weight, "Z": 0.25 * weight}
    ops = [
        sqrt(p) * dual_rail_pauli(name, n_max)
        for name, p in probs.items()
        if p > 0.0
    ]
    return kraus_map(ops, (h_mode.name, v_mode.name))


def mode_swap_unitary(a: ModeLabel, b: ModeLabel, phase: complex = 1.0) -> LinearMap:
    """Relabeling unitary |n_a, n_b> -> phase**n_a |n_b, n_a> on an equal-dim pair."""
    if a.dim != b.dim:
        raise ValueError("swap requires equal dimensions")
    d = a.dim
    op = np.zeros((d * d, d * d), dtype=complex)
    for na in range(d):
        for nb in range(d):
            op[nb * d + na, na * d + nb] = phase ** na
    return unitary_map(op, (a.name, b.name))


def gaussian_phase_multiplier(levels: np.ndarray, sigma: float) -> np.ndarray:
    """Schur multiplier of a Gaussian random phase e^{i theta w} per level weight w.

    Entry (i, j) is E[e^{i theta (w_i - w_j)}] = exp(-sigma^2 (w_i - w_j)^2 / 2),
    a Gram matrix and therefore positive semidefinite for any sigma.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    w = np.asarray(levels, dtype=float).reshape(-1)
    return np.exp(-0.5 * sigma ** 2 * (w[:, None] - w[None, :]) ** 2)


def dephasing_multiplier(n_max: int, attenuation: float) -> np.ndarray:
    """Schur multiplier of dual-rail phase diffusion on an (L, R) bosonic pair.

    A random relative phase theta on the two rails maps the ket |n_l, n_r>
    to exp(i theta (n_l - n_r)/2) |n_l, n_r>.  Averaging theta over a
    Gaussian whose width makes the single-excitation coherence shrink by
    `attenuation` gives the factor attenuation**(((d - d')/2)**2) on the
    (d, d') coherence class, d = n_l - n_r.  Being a Gram matrix of phase
    vectors, the multiplier is positive semidefinite for any attenuation
    in [0, 1].
    """
    if not 0.0 <= attenuation <= 1.0:
        raise ValueError(f"attenuation must be in [0,1], got {attenuation!r}")
    d = n_max + 1
    delta = np.array([[nl - nr for nr in range(d)] for nl in range(d)]).reshape(-1)
    diff = 0.5 * np.abs(delta[:, None] - delta[None, :])
    if attenuation == 0.0:
        return (diff == 0).astype(float)
    return attenuation ** (diff ** 2)
