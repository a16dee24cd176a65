"""Dense complex linear algebra over small registers of labeled modes.

States and operators always travel together with their register (an ordered
tuple of named modes), so cross-module code never has to guess how a bare
matrix is indexed.  Modes are either polarization qubits (basis H, V) or
truncated bosonic modes (Fock basis 0..n_max).  Everything here is a pure
function over value types; nothing mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

# Operator-law tolerance for double precision at dimensions up to ~1e4.
OP_TOL = 1e-10
# Vector-norm tolerance.
NORM_TOL = 1e-12

POLARIZATION = "polarization"
BOSONIC = "bosonic"

# Pauli matrices in the (H, V) basis; sigma_y's +1 eigenstate is (|H>+i|V>)/sqrt(2).
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class RegisterError(ValueError):
    """Register/mode bookkeeping violation (duplicate names, unknown labels...)."""


class NumericalError(ValueError):
    """An operator or state failed a numerical invariant beyond tolerance."""


@dataclass(frozen=True)
class ModeLabel:
    """A named mode: polarization qubit (dim 2) or bosonic mode (dim n_max+1)."""

    name: str
    kind: str = POLARIZATION
    n_max: int = 1

    def __post_init__(self):
        if self.kind not in (POLARIZATION, BOSONIC):
            raise RegisterError(f"unknown mode kind {self.kind!r}")
        if self.kind == BOSONIC and self.n_max < 1:
            raise RegisterError("bosonic mode needs n_max >= 1")

    @property
    def dim(self) -> int:
        return 2 if self.kind == POLARIZATION else self.n_max + 1


def qubit_mode(name: str) -> ModeLabel:
    return ModeLabel(name, POLARIZATION)


def bosonic_mode(name: str, n_max: int) -> ModeLabel:
    return ModeLabel(name, BOSONIC, n_max)


Register = tuple  # tuple[ModeLabel, ...]


def _check_register(register: Sequence[ModeLabel]) -> tuple:
    register = tuple(register)
    names = [m.name for m in register]
    if len(set(names)) != len(names):
        raise RegisterError(f"duplicate mode names in register: {names}")
    return register


def register_dims(register: Sequence[ModeLabel]) -> tuple:
    return tuple(m.dim for m in register)


def register_dim(register: Sequence[ModeLabel]) -> int:
    return int(np.prod(register_dims(register), dtype=np.int64)) if register else 1


def _positions(register: Sequence[ModeLabel], names: Iterable[str]) -> list:
    index = {m.name: i for i, m in enumerate(register)}
    out = []
    for name in names:
        if name not in index:
            raise RegisterError(f"mode {name!r} not in register {sorted(index)}")
        out.append(index[name])
    return out


@dataclass
class LabeledState:
    """Pure state: complex amplitude vector over the register's product basis."""

    register: tuple
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.register = _check_register(self.register)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dim = register_dim(self.register)
        if self.amplitudes.size != dim:
            raise RegisterError(
                f"amplitude length {self.amplitudes.size} != register dimension {dim}"
            )
        if self.normalized:
            nrm = float(np.linalg.norm(self.amplitudes))
            if abs(nrm - 1.0) >= NORM_TOL:
                raise NumericalError(f"state flagged normalized but ||psi|| = {nrm!r}")

    @property
    def dims(self) -> tuple:
        return register_dims(self.register)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def unit(self) -> "LabeledState":
        return LabeledState(self.register, self.amplitudes / self.norm(), normalized=True)

    def to_density(self) -> "DensityOperator":
        rho = np.outer(self.amplitudes, self.amplitudes.conj())
        return DensityOperator(self.register, rho, normalized=self.normalized)


@dataclass
class DensityOperator:
    """Mixed state: Hermitian PSD matrix; trace 1 unless conditioned on an event."""

    register: tuple
    matrix: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.register = _check_register(self.register)
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = register_dim(self.register)
        if self.matrix.shape != (dim, dim):
            raise RegisterError(
                f"matrix shape {self.matrix.shape} != register dimension ({dim},{dim})"
            )

    @property
    def dims(self) -> tuple:
        return register_dims(self.register)

    def trace(self) -> float:
        tr = complex(np.trace(self.matrix))
        if abs(tr.imag) > OP_TOL:
            raise NumericalError(f"trace has imaginary part {tr.imag!r}")
        return tr.real

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def validate(self, check_trace: bool | None = None) -> "DensityOperator":
        """Check Hermiticity, positivity and (optionally) unit trace.

        Asymmetry beyond tolerance is an error, never silently symmetrized.
        """
        dev = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if dev >= OP_TOL:
            raise NumericalError(f"matrix not Hermitian: max deviation {dev!r}")
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        evals = np.linalg.eigvalsh(herm)
        if float(evals.min()) < -OP_TOL:
            raise NumericalError(f"negative eigenvalue {float(evals.min())!r}")
        if check_trace is None:
            check_trace = self.normalized
        if check_trace and abs(self.trace() - 1.0) >= OP_TOL:
            raise NumericalError(f"trace {self.trace()!r} != 1")
        return self

    def unit(self) -> "DensityOperator":
        return DensityOperator(self.register, self.matrix / self.trace(), normalized=True)


UNITARY = "unitary"
KRAUS = "kraus-channel"
POVM_ELEMENT = "povm-element"


@dataclass
class LinearMap:
    """Unitary, Kraus channel or POVM element acting on a subset of modes."""

    kind: str
    operands: tuple
    acts_on: tuple

    def __post_init__(self):
        if self.kind not in (UNITARY, KRAUS, POVM_ELEMENT):
            raise ValueError(f"unknown map kind {self.kind!r}")
        self.operands = tuple(np.asarray(op, dtype=complex) for op in self.operands)
        self.acts_on = tuple(self.acts_on)
        if not self.operands:
            raise ValueError("map needs at least one operand")
        d = self.operands[0].shape[0]
        for op in self.operands:
            if op.shape != (d, d):
                raise ValueError("all operands must be square and same-dimensional")

    @property
    def dim(self) -> int:
        return self.operands[0].shape[0]

    def validate(self) -> "LinearMap":
        d = self.dim
        eye = np.eye(d)
        if self.kind == UNITARY:
            if len(self.operands) != 1:
                raise ValueError("unitary map takes exactly one operand")
            u = self.operands[0]
            if float(np.max(np.abs(u.conj().T @ u - eye))) >= OP_TOL:
                raise NumericalError("operand is not unitary")
        elif self.kind == KRAUS:
            acc = sum(k.conj().T @ k for k in self.operands)
            if float(np.max(np.abs(acc - eye))) >= OP_TOL:
                raise NumericalError("Kraus operators do not sum to identity")
        else:
            e = self.operands[0]
            if len(self.operands) != 1:
                raise ValueError("POVM element takes exactly one operand")
            if float(np.max(np.abs(e - e.conj().T))) >= OP_TOL:
                raise NumericalError("POVM element is not Hermitian")
            evals = np.linalg.eigvalsh(0.5 * (e + e.conj().T))
            if float(evals.min()) < -OP_TOL or float(evals.max()) > 1.0 + OP_TOL:
                raise NumericalError(f"POVM eigenvalues outside [0,1]: {evals.min()!r}, {evals.max()!r}")
        return self


def unitary_map(matrix: np.ndarray, acts_on: Sequence[str]) -> LinearMap:
    return LinearMap(UNITARY, (matrix,), tuple(acts_on))


def kraus_map(operators: Sequence[np.ndarray], acts_on: Sequence[str]) -> LinearMap:
    return LinearMap(KRAUS, tuple(operators), tuple(acts_on))


def povm_element(matrix: np.ndarray, acts_on: Sequence[str]) -> LinearMap:
    return LinearMap(POVM_ELEMENT, (matrix,), tuple(acts_on))


# ---------------------------------------------------------------------------
# basis construction helpers


def basis_ket(register: Sequence[ModeLabel], occupations) -> LabeledState:
    """Computational-basis ket.

    `occupations` is a per-mode sequence (or name->value dict) of basis
    indices; for polarization modes index 0 is H and 1 is V.
    """
    register = _check_register(register)
    if isinstance(occupations, dict):
        occ = [occupations.get(m.name, 0) for m in register]
    else:
        occ = list(occupations)
    dims = register_dims(register)
    if len(occ) != len(register):
        raise RegisterError("occupation list length != register length")
    for n, d in zip(occ, dims):
        if not 0 <= n < d:
            raise RegisterError(f"occupation {n} out of range for dimension {d}")
    amp = np.zeros(register_dim(register), dtype=complex)
    amp[int(np.ravel_multi_index(occ, dims))] = 1.0
    return LabeledState(register, amp, normalized=True)


def basis_index(register: Sequence[ModeLabel], occupations: Sequence[int]) -> int:
    return int(np.ravel_multi_index(list(occupations), register_dims(register)))


def all_occupations(register: Sequence[ModeLabel]):
    """Iterate basis occupation tuples in register (row-major) order."""
    dims = register_dims(register)
    for flat in range(register_dim(register)):
        yield tuple(int(x) for x in np.unravel_index(flat, dims))


# ---------------------------------------------------------------------------
# core operations


def tensor(a, b):
    """Kronecker composition; registers are concatenated and must be disjoint."""
    common = {m.name for m in a.register} & {m.name for m in b.register}
    if common:
        raise RegisterError(f"duplicate mode names across operands: {sorted(common)}")
    register = a.register + b.register
    if isinstance(a, LabeledState) and isinstance(b, LabeledState):
        return LabeledState(
            register,
            np.kron(a.amplitudes, b.amplitudes),
            normalized=a.normalized and b.normalized,
        )
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(
            register,
            np.kron(a.matrix, b.matrix),
            normalized=a.normalized and b.normalized,
        )
    raise TypeError("tensor requires two states or two density operators")


def permute(state, new_order: Sequence[str]):
    """Reorder the register; pure relabeling of the same physical state."""
    pos = _positions(state.register, new_order)
    if sorted(pos) != list(range(len(state.register))):
        raise RegisterError("new_order must be a permutation of the register")
    register = tuple(state.register[p] for p in pos)
    dims = state.dims
    if isinstance(state, LabeledState):
        amp = state.amplitudes.reshape(dims).transpose(pos).reshape(-1)
        return LabeledState(register, amp, normalized=state.normalized)
    n = len(dims)
    mat = state.matrix.reshape(dims + dims)
    mat = mat.transpose(pos + [p + n for p in pos])
    d = register_dim(register)
    return DensityOperator(register, mat.reshape(d, d), normalized=state.normalized)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def partial_trace(rho: DensityOperator, keep: Iterable[str]) -> DensityOperator:
    """Trace out every mode not in `keep`; result keeps the original order."""
    if not isinstance(rho, DensityOperator):
        raise TypeError("partial_trace expects a DensityOperator")
    keep = set(keep)
    _positions(rho.register, keep)  # validates names
    keep_pos = [i for i, m in enumerate(rho.register) if m.name in keep]
    dims = rho.dims
    n = len(dims)
    if 2 * n > len(_LETTERS):
        raise RegisterError("register too large for partial_trace")
    ket = list(_LETTERS[:n])
    bra = [
        ket[i] if i not in keep_pos else _LETTERS[n + i] for i in range(n)
    ]
    out = "".join(ket[i] for i in keep_pos) + "".join(bra[i] for i in keep_pos)
    spec = "".join(ket) + "".join(bra) + "->" + out
    tensor_form = np.einsum(spec, rho.matrix.reshape(dims + dims))
    register = tuple(rho.register[p] for p in keep_pos)
    d = register_dim(register)
    return DensityOperator(register, tensor_form.reshape(d, d), normalized=rho.normalized)


def _apply_matrix_subset(arr: np.ndarray, dims: tuple, op: np.ndarray, pos: list,
                         side_offset: int = 0) -> np.ndarray:
    """Contract `op` into the axes `pos` (+offset) of a reshaped tensor."""
    k = len(pos)
    op_dims = tuple(dims[p] for p in pos)
    opt = op.reshape(op_dims + op_dims)
    axes = [p + side_offset for p in pos]
    out = np.tensordot(opt, arr, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply(m: LinearMap, state):
    """Apply the map, identity-padded on untouched modes.

    Unitaries act on pure states or density operators; Kraus channels and
    POVM back-actions need a density operator (use measure_project for
    conditioning).
    """
    pos = _positions(state.register, m.acts_on)
    dims = state.dims
    sub_dim = int(np.prod([dims[p] for p in pos]))
    if sub_dim != m.dim:
        raise RegisterError(
            f"map dimension {m.dim} does not match target modes dimension {sub_dim}"
        )
    if isinstance(state, LabeledState):
        if m.kind != UNITARY:
            raise TypeError("only unitaries keep a pure state pure; convert to_density() first")
        psi = state.amplitudes.reshape(dims)
        psi = _apply_matrix_subset(psi, dims, m.operands[0], pos)
        return LabeledState(state.register, psi.reshape(-1), normalized=state.normalized)
    if not isinstance(state, DensityOperator):
        raise TypeError("apply expects a LabeledState or DensityOperator")
    if m.kind == POVM_ELEMENT:
        raise TypeError("POVM elements condition states; use measure_project")
    n = len(dims)
    rho = state.matrix.reshape(dims + dims)
    out = np.zeros_like(rho)
    ops = m.operands if m.kind == KRAUS else (m.operands[0],)
    for k in ops:
        term = _apply_matrix_subset(rho, dims, k, pos, side_offset=0)
        term = _apply_matrix_subset(term, dims, k.conj(), pos, side_offset=n)
        out += term
    d = register_dim(state.register)
    return DensityOperator(state.register, out.reshape(d, d), normalized=state.normalized)


def measure_project(state, element: LinearMap):
    """POVM conditioning: returns (probability, unnormalized post-state).

    The post-state is sqrt(E) rho sqrt(E) with trace equal to the event
    probability.
    """
    if element.kind != POVM_ELEMENT:
        raise TypeError("measure_project needs a POVM element")
    rho = state.to_density() if isinstance(state, LabeledState) else state
    pos = _positions(rho.register, element.acts_on)
    dims = rho.dims
    n = len(dims)
    e = element.operands[0]
    herm = 0.5 * (e + e.conj().T)
    evals, vecs = np.linalg.eigh(herm)
    if float(evals.min()) < -OP_TOL:
        raise NumericalError(f"POVM element has negative eigenvalue {float(evals.min())!r}")
    root = (vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.conj().T
    tens = rho.matrix.reshape(dims + dims)
    tens = _apply_matrix_subset(tens, dims, root, pos, side_offset=0)
    tens = _apply_matrix_subset(tens, dims, root.conj(), pos, side_offset=n)
    d = register_dim(rho.register)
    post = DensityOperator(rho.register, tens.reshape(d, d), normalized=False)
    prob = post.trace()
    if prob < -OP_TOL:
        raise NumericalError(f"negative event probability {prob!r}")
    return max(prob, 0.0), post


def expectation(rho: DensityOperator, obs: LinearMap) -> float:
    """Tr(rho O) for a Hermitian observable on a subset of modes."""
    o = obs.operands[0]
    if float(np.max(np.abs(o - o.conj().T))) >= OP_TOL:
        raise NumericalError("observable is not Hermitian")
    pos = _positions(rho.register, obs.acts_on)
    reduced = partial_trace(rho, [rho.register[p].name for p in pos])
    # partial_trace keeps original register order; realign to obs axis order
    reduced = permute(reduced, list(obs.acts_on))
    val = complex(np.trace(reduced.matrix @ o))
    if abs(val.imag) > OP_TOL:
        raise NumericalError(f"expectation has imaginary part {val.imag!r}")
    return val.real


def fidelity_pure(rho: DensityOperator, target: LabeledState) -> float:
    """<target| rho |target> for a normalized pure target on the same register."""
    if tuple(m.name for m in rho.register) != tuple(m.name for m in target.register):
        raise RegisterError("register mismatch between state and target")
    if abs(target.norm() - 1.0) >= NORM_TOL:
        raise NumericalError("target state is not normalized")
    val = complex(target.amplitudes.conj() @ rho.matrix @ target.amplitudes)
    if abs(val.imag) > OP_TOL:
        raise NumericalError(f"fidelity has imaginary part {val.imag!r}")
    f = val.real
    if f < -OP_TOL or f > 1.0 + OP_TOL:
        raise NumericalError(f"fidelity {f!r} outside [0,1]")
    return float(min(max(f, 0.0), 1.0))
