"""Exact Fock-space lifts of passive linear-optical mode maps.

A passive map sends each input creation operator to a fixed linear
combination of output creation operators.  Lifting it to the multimode Fock
basis is exact photon-number-conserving bookkeeping: the output side is
never truncated, so detection statistics computed through the lift include
every multi-photon interference term the mode map allows.
"""

from __future__ import annotations

from math import factorial, sqrt

import numpy as np


def occupation_basis(dims) -> list:
    """All occupation tuples of a truncated input register, row-major order."""
    grids = np.indices(tuple(dims)).reshape(len(dims), -1).T
    return [tuple(int(x) for x in row) for row in grids]


def check_isometry(mode_matrix: np.ndarray, tol: float = 1e-12) -> None:
    m = np.asarray(mode_matrix)
    gram = m.conj().T @ m
    if float(np.max(np.abs(gram - np.eye(m.shape[1])))) > tol:
        raise ValueError("mode matrix columns are not orthonormal (not an isometry)")


def lift_isometry(mode_matrix: np.ndarray, in_dims):
    """Lift a passive mode isometry to the truncated input Fock basis.

    mode_matrix has shape (n_out, n_in); column i gives the output-mode
    amplitudes of input mode i's creation operator.  Returns
    (gamma, out_basis, in_basis): gamma[k, j] is the amplitude of output
    occupation out_basis[k] when feeding input occupation in_basis[j].
    Columns have unit norm (photon number is conserved, no output
    truncation).
    """
    m = np.asarray(mode_matrix, dtype=complex)
    check_isometry(m)
    n_out = m.shape[0]
    in_basis = occupation_basis(in_dims)
    columns = []
    out_index: dict = {}
    out_basis: list = []
    for occ in in_basis:
        # expand prod_i (sum_j M[j,i] b_j^dag)^{n_i} / sqrt(n_i!) acting on vacuum
        amps = {tuple([0] * n_out): 1.0 + 0.0j}
        for i, n_i in enumerate(occ):
            for _ in range(n_i):
                nxt: dict = {}
                for ket, c in amps.items():
                    for j in range(n_out):
                        coeff = m[j, i]
                        if coeff == 0.0:
                            continue
                        lifted = list(ket)
                        lifted[j] += 1
                        key = tuple(lifted)
                        nxt[key] = nxt.get(key, 0.0) + c * coeff * sqrt(lifted[j])
                amps = nxt
        norm = sqrt(float(np.prod([factorial(n) for n in occ])))
        col = {}
        for ket, c in amps.items():
            if ket not in out_index:
                out_index[ket] = len(out_basis)
                out_basis.append(ket)
            col[out_index[ket]] = c / norm
        columns.append(col)
    gamma = np.zeros((len(out_basis), len(in_basis)), dtype=complex)
    for j, col in enumerate(columns):
        for k, c in col.items():
            gamma[k, j] = c
    return gamma, out_basis, in_basis


def detection_povm(mode_matrix: np.ndarray, in_dims, weight_fn) -> np.ndarray:
    """POVM element on the truncated input space for an occupation-diagonal event.

    weight_fn maps an output occupation tuple to the event probability given
    that occupation (detector click logic lives there).  The result is
    gamma^dag diag(w) gamma, exact on the truncated input space.
    """
    gamma, out_basis, _ = lift_isometry(mode_matrix, in_dims)
    w = np.array([weight_fn(occ) for occ in out_basis], dtype=float)
    if w.min() < 0.0 or w.max() > 1.0 + 1e-12:
        raise ValueError("event weights must be probabilities in [0,1]")
    return gamma.conj().T @ (w[:, None] * gamma)
