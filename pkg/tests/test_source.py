"""Ensemble source: write statistics, path combination, retrieval."""

from itertools import product

import numpy as np
import pytest

from repeatersim import channels, source
from repeatersim.qstate import (
    LabeledState,
    apply,
    fidelity_pure,
    measure_project,
    povm_element,
)

RNG = np.random.default_rng(11)


def total_occupation_projector(rho, predicate):
    dims = rho.dims
    names = [m.name for m in rho.register]
    proj = np.zeros((int(np.prod(dims)),) * 2)
    for idx, occ in enumerate(product(*[range(d) for d in dims])):
        if predicate(dict(zip(names, occ))):
            proj[idx, idx] = 1.0
    return povm_element(proj, tuple(names))


def lossy_combined_state(params, site="I"):
    combined = source.combine_anti_stokes(source.write_joint_state(params, site), params)
    rho = combined.to_density()
    for m in rho.register[:2]:
        rho = apply(channels.loss_channel(m, params.eta_as), rho)
    return rho


class TestWriteJointState:
    def test_zero_chi_gives_vacuum(self):
        params = source.EnsembleParams(chi=0.0)
        aps = source.write_joint_state(params)
        amp = aps.state.amplitudes
        assert np.isclose(abs(amp[0]), 1.0)
        assert np.allclose(amp[1:], 0.0)

    def test_double_excitation_amplitude_ratio(self):
        params = source.EnsembleParams(chi=0.01)
        aps = source.write_joint_state(params)
        amp = aps.state.amplitudes.reshape(aps.state.dims)
        ratio = abs(amp[2, 0, 2, 0] / amp[1, 0, 1, 0])
        assert abs(ratio - np.sqrt(0.01)) < 1e-10

    def test_photon_number_correlation(self):
        params = source.EnsembleParams(chi=0.05, truncation=3)
        amp = source.write_joint_state(params).state.amplitudes.reshape(4, 4, 4, 4)
        for nl, nr, ml, mr in product(range(4), repeat=4):
            if abs(amp[nl, nr, ml, mr]) > 1e-15:
                assert nl == ml and nr == mr

    def test_truncation_rejections(self):
        with pytest.raises(ValueError):
            source.EnsembleParams(chi=0.01, truncation=1)
        with pytest.raises(ValueError):
            # tail above 1e-3 for chi = 0.2 at truncation 2
            source.EnsembleParams(chi=0.2, truncation=2)

    def test_emission_probability_monotone_in_chi(self):
        last = -1.0
        for chi in (0.001, 0.005, 0.01, 0.05, 0.1):
            params = source.EnsembleParams(chi=chi, truncation=4)
            rho = lossy_combined_state(params)
            elem = total_occupation_projector(
                rho, lambda occ: occ["I.as_h"] + occ["I.as_v"] >= 1
            )
            prob, _ = measure_project(rho, elem)
            assert prob > last
            last = prob

    def test_single_excitation_only_drops_doubles(self):
        params = source.EnsembleParams(chi=0.05, single_excitation_only=True)
        amp = source.write_joint_state(params).state.amplitudes.reshape(3, 3, 3, 3)
        for nl, nr, ml, mr in product(range(3), repeat=4):
            if nl + nr > 1:
                assert abs(amp[nl, nr, ml, mr]) < 1e-15


class TestCombineAntiStokes:
    @pytest.mark.parametrize("phi1", [0.0, np.pi])
    def test_single_photon_component_is_dual_rail_entangled(self, phi1):
        params = source.EnsembleParams(chi=0.01, phi1=phi1)
        combined = source.combine_anti_stokes(source.write_joint_state(params), params)
        rho = combined.to_density()
        elem = total_occupation_projector(
            rho, lambda occ: occ["I.as_h"] + occ["I.as_v"] == 1
        )
        _, post = measure_project(rho, elem)
        target = source.eq_dual_rail_target("I", phi1, params.truncation)
        assert fidelity_pure(post.unit(), target) > 1 - 1e-10

    def test_single_detection_probability_against_enumeration(self):
        # independent oracle: per-mode amplitude law + binomial thinning per sector
        chi, eta = 0.01, 0.25
        n2 = 1.0 / (1.0 + chi + chi ** 2)
        sector_probs = {
            1: 2 * chi * n2 ** 2,
            2: 3 * chi ** 2 * n2 ** 2,
            3: 2 * chi ** 3 * n2 ** 2,
            4: chi ** 4 * n2 ** 2,
        }
        oracle = sum(
            p * k * eta * (1 - eta) ** (k - 1) for k, p in sector_probs.items()
        )
        params = source.EnsembleParams(chi=chi, eta_as=eta)
        rho = lossy_combined_state(params)
        elem = total_occupation_projector(
            rho, lambda occ: occ["I.as_h"] + occ["I.as_v"] == 1
        )
        prob, _ = measure_project(rho, elem)
        assert abs(prob - oracle) < 1e-12
        # leading order 2 chi (1-chi) eta
        assert abs(prob - 2 * chi * (1 - chi) * eta) < 1.5e-4


class TestRetrieve:
    def single_memory(self, amp_l, amp_r, truncation=2):
        reg = source.write_register("I", truncation)[2:]
        amp = np.zeros((truncation + 1,) * 2, dtype=complex)
        amp[1, 0] = amp_l
        amp[0, 1] = amp_r
        return LabeledState(reg, amp.reshape(-1))

    def test_ideal_retrieval_maps_polarization(self):
        params = source.EnsembleParams(chi=0.01, eta_ret=1.0)
        mem = self.single_memory(1 / np.sqrt(2), 1 / np.sqrt(2))
        out = source.retrieve(mem.to_density(), params, "I")
        dims = tuple(m.dim for m in out.register)
        target = np.zeros(dims, dtype=complex)
        target[1, 0] = 1 / np.sqrt(2)  # |H>
        target[0, 1] = 1 / np.sqrt(2)  # |V>
        f = fidelity_pure(out, LabeledState(out.register, target.reshape(-1)))
        assert f > 1 - 1e-10

    def test_partial_retrieval_probability(self):
        params = source.EnsembleParams(chi=0.01, eta_ret=0.35)
        mem = self.single_memory(0.0, 1.0)
        out = source.retrieve(mem.to_density(), params, "I")
        elem = total_occupation_projector(
            out, lambda occ: occ["I.s_h"] + occ["I.s_v"] >= 1
        )
        prob, _ = measure_project(out, elem)
        assert abs(prob - 0.35) < 1e-10

    def test_zero_retrieval_gives_vacuum(self):
        params = source.EnsembleParams(chi=0.01, eta_ret=0.0)
        mem = self.single_memory(1.0, 0.0)
        out = source.retrieve(mem.to_density(), params, "I")
        vac = np.zeros(out.matrix.shape[0])
        vac[0] = 1.0
        assert np.isclose((vac @ out.matrix @ vac).real, 1.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_phase_sum_reaches_pair_state(self, seed):
        rng = np.random.default_rng(seed)
        phi1, phi2 = rng.uniform(-np.pi, np.pi, 2)
        params = source.EnsembleParams(chi=0.01, phi1=phi1, phi2=phi2)
        combined = source.combine_anti_stokes(source.write_joint_state(params), params)
        rho = source.retrieve(combined.to_density(), params, "I")
        elem = total_occupation_projector(
            rho,
            lambda occ: occ["I.as_h"] + occ["I.as_v"] == 1
            and occ["I.s_h"] + occ["I.s_v"] == 1,
        )
        _, post = measure_project(rho, elem)
        target = source.pair_target(rho.register, phi1 + phi2)
        assert fidelity_pure(post.unit(), target) > 1 - 1e-9


class TestTruncationConvergence:
    def test_observables_stable_between_truncations(self):
        chi = 0.01
        values = {}
        for trunc in (2, 3):
            params = source.EnsembleParams(chi=chi, eta_as=0.25, truncation=trunc)
            rho = lossy_combined_state(params)
            elem = total_occupation_projector(
                rho, lambda occ: occ["I.as_h"] + occ["I.as_v"] >= 1
            )
            prob, _ = measure_project(rho, elem)
            values[trunc] = prob
        rel = abs(values[2] - values[3]) / values[3]
        assert rel < 5e-3
