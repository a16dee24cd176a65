"""Analyzers, Bell station POVMs and click sampling, checked against
hand-rolled enumeration oracles that never touch the production lift code."""

from itertools import product
from math import comb, factorial, sqrt

import numpy as np
import pytest

from repeatersim.optics import (
    Analyzer,
    BSMStation,
    ClickPattern,
    Detector,
    analyzer_outcome_povms,
    analyzer_povm,
    bsm_mode_matrix,
    bsm_outcome_povms,
    bsm_phi_plus_povm,
    coincidence,
    sample_clicks,
)
from repeatersim.qstate import LabeledState, basis_ket, bosonic_mode, measure_project

RNG = np.random.default_rng(7)

H2 = bosonic_mode("ph.h", 2)
V2 = bosonic_mode("ph.v", 2)
BSM_MODES = tuple(bosonic_mode(n, 2) for n in ("a.h", "a.v", "b.h", "b.v"))


def one_photon(h_amp, v_amp, h=H2, v=V2) -> LabeledState:
    amp = np.zeros((h.dim, v.dim), dtype=complex)
    amp[1, 0] = h_amp
    amp[0, 1] = v_amp
    return LabeledState((h, v), amp.reshape(-1))


def click_probability(state, analyzer, eta):
    e_click, _ = analyzer_povm(analyzer, eta, (state.register[0], state.register[1]))
    prob, _ = measure_project(state, e_click)
    return prob


class TestAnalyzer:
    def test_h_at_zero_degrees_always_clicks(self):
        assert np.isclose(click_probability(one_photon(1, 0), Analyzer(0.0), 1.0), 1.0)

    def test_h_at_45_degrees_half(self):
        assert np.isclose(click_probability(one_photon(1, 0), Analyzer(45.0), 1.0), 0.5)

    def test_two_photon_saturation_against_binomial_oracle(self):
        # brute force: two photons at the port, each seen with prob eta
        eta = 0.5
        oracle = sum(
            comb(2, k) * eta ** k * (1 - eta) ** (2 - k) for k in range(1, 3)
        )
        two_h = basis_ket((H2, V2), [2, 0])
        assert np.isclose(click_probability(two_h, Analyzer(0.0), eta), oracle)
        assert np.isclose(oracle, 0.75)

    def test_port_projectors_sum_to_identity(self):
        for analyzer in (Analyzer(0.0), Analyzer(22.5), Analyzer(45.0), Analyzer(0, "circular")):
            p, q = analyzer.port_projectors()
            assert np.max(np.abs(p + q - np.eye(2))) < 1e-12

    def test_circular_port_is_sigma_y_eigenstate(self):
        plus_circ = one_photon(1 / sqrt(2), 1j / sqrt(2))
        assert np.isclose(click_probability(plus_circ, Analyzer(0, "circular"), 1.0), 1.0)

    def test_outcome_povms_complete_and_exclusive(self):
        dets = (Detector(eta=0.8, dark_prob=0.01), Detector(eta=0.6, dark_prob=0.002))
        povms = analyzer_outcome_povms(Analyzer(30.0), (H2, V2), *dets)
        total = sum(p.operands[0] for p in povms.values())
        assert np.max(np.abs(total - np.eye(9))) < 1e-9
        for p in povms.values():
            p.validate()


# ---------------------------------------------------------------------------
# independent oracle: explicit creation-operator expansion of 2-photon inputs


def oracle_two_photon_outputs(coeffs, matrix):
    """Expand sum c_pq a_p^dag b_q^dag |0> through a mode matrix by hand."""
    monomials = {}
    col = {"H": 0, "V": 1}
    for (p, q), c in coeffs.items():
        for j in range(4):
            for k in range(4):
                amp = c * matrix[j, col[p]] * matrix[k, col[q] + 2]
                if amp == 0:
                    continue
                occ = [0, 0, 0, 0]
                occ[j] += 1
                occ[k] += 1
                key = tuple(occ)
                monomials[key] = monomials.get(key, 0.0) + amp
    out = {}
    for occ, c in monomials.items():
        # prod b_j^dag^{occ_j} |0> = sqrt(prod occ_j!) |occ>
        norm = sqrt(float(np.prod([factorial(n) for n in occ])))
        out[occ] = c * norm
    return out


def oracle_pattern_prob(coeffs, pattern_pairs=((0, 2), (1, 3))):
    """P(union of same-sign coincidences) with ideal detectors."""
    amps = oracle_two_photon_outputs(coeffs, bsm_mode_matrix())
    total = 0.0
    for occ, amp in amps.items():
        clicked = [n > 0 for n in occ]
        if any(clicked[i] and clicked[j] for i, j in pattern_pairs):
            total += abs(amp) ** 2
    return total


def two_photon_state(coeffs) -> LabeledState:
    amp = np.zeros((3, 3, 3, 3), dtype=complex)
    idx = {"H": (1, 0), "V": (0, 1)}
    for (p, q), c in coeffs.items():
        ah, av = idx[p]
        bh, bv = idx[q]
        amp[ah, av, bh, bv] = c
    return LabeledState(BSM_MODES, amp.reshape(-1))


BELL_STATES = {
    "phi_plus": {("H", "H"): 1 / sqrt(2), ("V", "V"): 1 / sqrt(2)},
    "phi_minus": {("H", "H"): 1 / sqrt(2), ("V", "V"): -1 / sqrt(2)},
    "psi_plus": {("H", "V"): 1 / sqrt(2), ("V", "H"): 1 / sqrt(2)},
}


class TestBellStation:
    def test_oracle_normalization(self):
        for coeffs in BELL_STATES.values():
            amps = oracle_two_photon_outputs(coeffs, bsm_mode_matrix())
            assert np.isclose(sum(abs(a) ** 2 for a in amps.values()), 1.0)

    @pytest.mark.parametrize("name,expected_kind", [
        ("phi_plus", "herald"),
        ("phi_minus", "reject"),
        ("psi_plus", "reject"),
    ])
    def test_bell_inputs_against_transform_oracle(self, name, expected_kind):
        coeffs = BELL_STATES[name]
        oracle = oracle_pattern_prob(coeffs)
        station = BSMStation()
        prob, _ = measure_project(
            two_photon_state(coeffs), bsm_phi_plus_povm(station, BSM_MODES)
        )
        assert np.isclose(prob, oracle, atol=1e-10)
        if expected_kind == "herald":
            # both same-sign coincidences fire on the target state
            assert np.isclose(oracle, 1.0)
        else:
            assert oracle < 1e-12

    def test_phi_minus_lands_in_cross_pattern(self):
        oracle = oracle_pattern_prob(BELL_STATES["phi_minus"], pattern_pairs=((0, 3), (1, 2)))
        assert np.isclose(oracle, 1.0)

    def test_single_photon_subspace_proportional_to_target(self):
        eta = 0.7
        station = BSMStation(detectors=tuple(Detector(eta=eta) for _ in range(4)))
        e = bsm_phi_plus_povm(station, BSM_MODES).operands[0]
        # single photon per port subspace, ordered (HH, HV, VH, VV)
        kets = [("H", "H"), ("H", "V"), ("V", "H"), ("V", "V")]
        idx = {"H": (1, 0), "V": (0, 1)}
        flat = []
        for p, q in kets:
            occ = idx[p] + idx[q]
            flat.append(int(np.ravel_multi_index(occ, (3, 3, 3, 3))))
        sub = e[np.ix_(flat, flat)]
        phi = np.array([1, 0, 0, 1]) / sqrt(2)
        assert np.max(np.abs(sub - eta ** 2 * np.outer(phi, phi))) < 1e-9

    def test_povm_element_bounded(self):
        station = BSMStation(
            detectors=tuple(Detector(eta=e, dark_prob=d) for e, d in
                            [(0.9, 0.01), (0.8, 0.0), (0.95, 0.002), (1.0, 0.0)])
        )
        bsm_phi_plus_povm(station, BSM_MODES).validate()

    def test_outcome_family_sums_to_identity(self):
        for _ in range(3):
            dets = tuple(
                Detector(eta=float(RNG.uniform(0.2, 1.0)), dark_prob=float(RNG.uniform(0, 0.05)))
                for _ in range(4)
            )
            station = BSMStation(detectors=dets)
            povms = bsm_outcome_povms(station, BSM_MODES)
            total = sum(p.operands[0] for p in povms.values())
            assert np.max(np.abs(total - np.eye(81))) < 1e-9

    def test_mode_overlap_mixture_stays_valid(self):
        station = BSMStation(mode_overlap=0.8)
        elem = bsm_phi_plus_povm(station, BSM_MODES)
        elem.validate()
        # distinguishable photons halve the heralding rate of the target state
        prob, _ = measure_project(two_photon_state(BELL_STATES["phi_plus"]), elem)
        assert np.isclose(prob, 0.8 * 1.0 + 0.2 * 0.5, atol=1e-10)


class TestSampling:
    def test_always_clicks_with_photon(self):
        rng = np.random.default_rng(1)
        dist = {(1,): 1.0}
        for _ in range(20):
            pattern = sample_clicks(dist, [Detector(eta=1.0)], rng)
            assert pattern.clicks == (True,)

    def test_never_clicks_without_efficiency(self):
        rng = np.random.default_rng(2)
        dist = {(1,): 1.0}
        for _ in range(20):
            pattern = sample_clicks(dist, [Detector(eta=0.0)], rng)
            assert pattern.clicks == (False,)

    def test_dark_count_fraction_million_windows(self):
        rng = np.random.default_rng(3)
        dist = {(0,): 1.0}
        det = Detector(eta=0.0, dark_prob=0.01)
        n = 1_000_000
        hits = sum(sample_clicks(dist, [det], rng).clicks[0] for _ in range(n))
        stderr = sqrt(0.01 * 0.99 / n)
        assert abs(hits / n - 0.01) < 3 * stderr

    def test_frequencies_match_povm_probabilities(self):
        # fixed two-photon input, moderate sample count, 4 sigma band
        rng = np.random.default_rng(4)
        eta = 0.6
        state = two_photon_state(BELL_STATES["phi_plus"])
        station = BSMStation(detectors=tuple(Detector(eta=eta) for _ in range(4)))
        exact, _ = measure_project(state, bsm_phi_plus_povm(station, BSM_MODES))

        # sample occupations from the ideal transform, then thin
        amps = oracle_two_photon_outputs(BELL_STATES["phi_plus"], bsm_mode_matrix())
        occs = list(amps)
        probs = np.array([abs(amps[o]) ** 2 for o in occs])
        dets = [Detector(eta=eta)] * 4
        n = 100_000
        wins = 0
        dist = {o: p for o, p in zip(occs, probs)}
        for _ in range(n):
            pat = sample_clicks(dist, dets, rng)
            wins += (pat.clicks[0] and pat.clicks[2]) or (pat.clicks[1] and pat.clicks[3])
        stderr = sqrt(exact * (1 - exact) / n)
        assert abs(wins / n - exact) < 4 * stderr


class TestCoincidence:
    def test_all_required_clicked(self):
        p = ClickPattern((True, True, False, False), window_id=3)
        q = ClickPattern((True,), window_id=3)
        assert coincidence([p, q], [(0, 0), (0, 1), (1, 0)])

    def test_one_missing(self):
        p = ClickPattern((True, False), window_id=0)
        assert not coincidence([p], [(0, 0), (0, 1)])

    def test_empty_requirement_vacuous(self):
        p = ClickPattern((False,), window_id=0)
        assert coincidence([p], [])

    def test_misaligned_windows_rejected(self):
        p = ClickPattern((True,), window_id=0)
        q = ClickPattern((True,), window_id=1)
        with pytest.raises(ValueError):
            coincidence([p, q], [(0, 0)])
