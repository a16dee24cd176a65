"""Linear-optical elements and detection.

The Bell analyzer overlaps the two incoming photons on a polarizing beam
splitter (H transmitted, V reflected, no reflection phase), sends each
output arm through a diagonal-basis analyzer, and calls the target Bell
state on a same-sign coincidence between the two arms.  POVM elements are
built exactly through the Fock-space lift of the mode transform, so
multi-photon saturation of the non-number-resolving detectors is included.
Detectors with reduced mode overlap at the splitter are modeled as a
mixture of the interfering transform and a port-tagged (fully
distinguishable) transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import cos, radians, sin

import numpy as np

from .fock import detection_povm, occupation_basis
from .qstate import LinearMap, ModeLabel, povm_element

LINEAR = "linear"
CIRCULAR = "circular"


@dataclass(frozen=True)
class Analyzer:
    """Polarization analyzer; the transmitted port projects onto the + state.

    Linear kind at angle theta transmits cos(theta)|H> + sin(theta)|V>.
    Circular kind transmits (|H> + i|V>)/sqrt(2), the sigma_y = +1
    eigenstate, and reflects the orthogonal circular state.
    """

    theta_deg: float = 0.0
    basis_kind: str = LINEAR

    def __post_init__(self):
        if self.basis_kind not in (LINEAR, CIRCULAR):
            raise ValueError(f"unknown analyzer basis {self.basis_kind!r}")

    def mode_matrix(self) -> np.ndarray:
        """2x2 map from (h, v) annihilation ops to (transmit, reflect) ports."""
        if self.basis_kind == CIRCULAR:
            return np.array([[1.0, -1.0j], [1.0, 1.0j]], dtype=complex) / np.sqrt(2.0)
        th = radians(self.theta_deg)
        return np.array([[cos(th), sin(th)], [-sin(th), cos(th)]], dtype=complex)

    def port_projectors(self) -> tuple:
        """Single-photon projectors of the two ports; they sum to identity."""
        m = self.mode_matrix()
        t = m[0].conj()
        r = m[1].conj()
        return np.outer(t, t.conj()), np.outer(r, r.conj())


@dataclass(frozen=True)
class Detector:
    """Threshold detector: efficiency, dark-count probability per gate window."""

    eta: float = 1.0
    dark_prob: float = 0.0
    number_resolving: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"detector efficiency must be in [0,1], got {self.eta!r}")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError(f"dark_prob must be in [0,1), got {self.dark_prob!r}")

    def click_prob(self, n: int) -> float:
        return 1.0 - (1.0 - self.dark_prob) * (1.0 - self.eta) ** n


@dataclass(frozen=True)
class ClickPattern:
    clicks: tuple
    window_id: int = 0


@dataclass(frozen=True)
class BSMStation:
    """PBS + two diagonal analyzers + four detectors, heralding one Bell state.

    Detector channel order is (c+, c-, d+, d-) for output arms c and d; the
    heralded coincidence is (c+, d+) or (c-, d-).
    """

    analyzers: tuple = (Analyzer(45.0), Analyzer(45.0))
    detectors: tuple = (Detector(), Detector(), Detector(), Detector())
    target_bell_state: str = "phi_plus"
    mode_overlap: float = 1.0

    def __post_init__(self):
        if len(self.analyzers) != 2 or len(self.detectors) != 4:
            raise ValueError("station needs two arm analyzers and four detectors")
        if self.target_bell_state != "phi_plus":
            raise ValueError("only the phi_plus herald is implemented")
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ValueError("mode_overlap must be in [0,1]")


def _require_equal_bosonic(modes) -> int:
    dims = {m.dim for m in modes}
    if len(dims) != 1:
        raise ValueError("modes entering one element must share a truncation")
    return modes[0].dim - 1


# ---------------------------------------------------------------------------
# single-photon analyzers


def analyzer_povm(analyzer: Analyzer, eta: float, modes, dark_prob: float = 0.0) -> tuple:
    """Click / no-click POVM pair for the transmitted port of an analyzer.

    Efficiency folds in as 1-(1-eta)^n on the n photons reaching the port.
    `modes` are the (h, v) bosonic mode labels the element acts on.
    """
    modes = tuple(modes)
    _require_equal_bosonic(modes)
    det = Detector(eta=eta, dark_prob=dark_prob)
    e_click = _analyzer_weighted_povm(
        analyzer, tuple(m.dim for m in modes), lambda occ: det.click_prob(occ[0])
    )
    names = tuple(m.name for m in modes)
    identity = np.eye(e_click.shape[0])
    return (
        povm_element(e_click, names),
        povm_element(identity - e_click, names),
    )


def _analyzer_weighted_povm(analyzer: Analyzer, dims, weight_fn) -> np.ndarray:
    return detection_povm(analyzer.mode_matrix(), dims, weight_fn)


ANALYZER_OUTCOMES = ("plus", "minus", "both", "none")


def analyzer_outcome_povms(analyzer: Analyzer, modes, det_plus: Detector,
                           det_minus: Detector) -> dict:
    """Exclusive outcome POVMs {plus, minus, both, none} of one analyzer.

    'plus' means the transmitted-port detector fired and the reflected-port
    one did not; 'both' covers multi-photon or dark double fires.  The four
    elements sum to identity.
    """
    modes = tuple(modes)
    _require_equal_bosonic(modes)
    names = tuple(m.name for m in modes)
    dims = tuple(m.dim for m in modes)

    def weight(occ, fired_plus, fired_minus):
        qp = det_plus.click_prob(occ[0])
        qm = det_minus.click_prob(occ[1])
        wp = qp if fired_plus else 1.0 - qp
        wm = qm if fired_minus else 1.0 - qm
        return wp * wm

    flags = {"plus": (True, False), "minus": (False, True),
             "both": (True, True), "none": (False, False)}
    out = {}
    for name, (fp, fm) in flags.items():
        mat = _analyzer_weighted_povm(analyzer, dims, lambda occ: weight(occ, fp, fm))
        out[name] = povm_element(mat, names)
    return out


# ---------------------------------------------------------------------------
# Bell-state measurement station


def bsm_mode_matrix(theta_c_deg: float = 45.0, theta_d_deg: float = 45.0) -> np.ndarray:
    """(a_h, a_v, b_h, b_v) -> (c+, c-, d+, d-) mode map of PBS + arm analyzers."""
    tc, td = radians(theta_c_deg), radians(theta_d_deg)
    # arm c carries a_h (transmitted) and b_v (reflected); arm d the mirror pair
    return np.array(
        [
            [cos(tc), 0.0, 0.0, sin(tc)],
            [-sin(tc), 0.0, 0.0, cos(tc)],
            [0.0, sin(td), cos(td), 0.0],
            [0.0, cos(td), -sin(td), 0.0],
        ],
        dtype=complex,
    )


def bsm_tagged_mode_matrix(theta_c_deg: float = 45.0, theta_d_deg: float = 45.0) -> np.ndarray:
    """Distinguishable-photon variant: each input port keeps its own tag.

    Outputs are the four detector modes duplicated per input port (8 modes);
    a detector then sees the summed occupation of its two tags, so no
    two-photon interference between the ports survives.
    """
    m = bsm_mode_matrix(theta_c_deg, theta_d_deg)
    tagged = np.zeros((8, 4), dtype=complex)
    for out_row in range(4):
        # port a feeds columns 0,1; port b feeds columns 2,3
        tagged[out_row, 0] = m[out_row, 0]
        tagged[out_row, 1] = m[out_row, 1]
        tagged[out_row + 4, 2] = m[out_row, 2]
        tagged[out_row + 4, 3] = m[out_row, 3]
    return tagged


def _phi_plus_click_weight(detectors) -> callable:
    def weight(counts):
        q = [d.click_prob(n) for d, n in zip(detectors, counts)]
        return q[0] * q[2] + q[1] * q[3] - q[0] * q[1] * q[2] * q[3]

    return weight


@lru_cache(maxsize=64)
def _bsm_povm_matrix(n_max: int, det_key: tuple, thetas: tuple, overlap: float) -> np.ndarray:
    detectors = [Detector(eta=e, dark_prob=d) for e, d in det_key]
    dims = (n_max + 1,) * 4
    weight = _phi_plus_click_weight(detectors)
    coherent = detection_povm(bsm_mode_matrix(*thetas), dims, weight)
    if overlap >= 1.0:
        return coherent
    tagged_weight = lambda occ: weight([occ[i] + occ[i + 4] for i in range(4)])
    tagged = detection_povm(bsm_tagged_mode_matrix(*thetas), dims, tagged_weight)
    return overlap * coherent + (1.0 - overlap) * tagged


def bsm_phi_plus_povm(station: BSMStation, modes) -> LinearMap:
    """POVM element of the heralding coincidence on the two dual-rail photons.

    `modes` are the four bosonic labels (site-1 h, site-1 v, site-2 h,
    site-2 v) feeding ports a and b of the splitter.
    """
    modes = tuple(modes)
    if len(modes) != 4:
        raise ValueError("station acts on four photonic modes")
    n_max = _require_equal_bosonic(modes)
    det_key = tuple((d.eta, d.dark_prob) for d in station.detectors)
    thetas = (station.analyzers[0].theta_deg, station.analyzers[1].theta_deg)
    mat = _bsm_povm_matrix(n_max, det_key, thetas, station.mode_overlap)
    return povm_element(mat, tuple(m.name for m in modes))


def bsm_outcome_povms(station: BSMStation, modes) -> dict:
    """All 16 exclusive detector-fire configurations; they sum to identity."""
    modes = tuple(modes)
    n_max = _require_equal_bosonic(modes)
    dims = (n_max + 1,) * 4
    names = tuple(m.name for m in modes)
    matrix = bsm_mode_matrix(
        station.analyzers[0].theta_deg, station.analyzers[1].theta_deg
    )
    out = {}
    for config in occupation_basis((2, 2, 2, 2)):
        fired = tuple(bool(x) for x in config)

        def weight(counts, fired=fired):
            w = 1.0
            for det, n, f in zip(station.detectors, counts, fired):
                q = det.click_prob(n)
                w *= q if f else 1.0 - q
            return w

        out[fired] = povm_element(detection_povm(matrix, dims, weight), names)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo detection primitives


def sample_clicks(occupation_probs, detectors, rng, window_id: int = 0) -> ClickPattern:
    """Sample one detection window from a photon-number distribution.

    occupation_probs maps occupation tuples (one count per detector input
    mode) to probabilities.  Each photon survives independently with the
    detector's efficiency; a dark count is OR-ed in.  Deterministic given
    the rng stream position.
    """
    occs = list(occupation_probs.keys())
    probs = np.array([occupation_probs[o] for o in occs], dtype=float)
    if probs.min() < -1e-12 or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("occupation probabilities must form a distribution")
    choice = occs[int(rng.choice(len(occs), p=probs / probs.sum()))]
    clicks = []
    for det, n in zip(detectors, choice):
        survivors = int(rng.binomial(n, det.eta)) if n else 0
        dark = bool(rng.random() < det.dark_prob)
        clicks.append(survivors > 0 or dark)
    return ClickPattern(clicks=tuple(clicks), window_id=window_id)


def coincidence(patterns, required) -> bool:
    """True iff every required (pattern_index, channel_index) clicked.

    All patterns must share a window; an empty requirement is vacuously
    true by convention.
    """
    windows = {p.window_id for p in patterns}
    if len(windows) > 1:
        raise ValueError(f"misaligned windows: {sorted(windows)}")
    return all(patterns[i].clicks[ch] for i, ch in required)
