"""Swap conditioning, storage dephasing, double-excitation accounting."""

import numpy as np
import pytest

from repeatersim import channels, protocol, source
from repeatersim.optics import BSMStation
from repeatersim.qstate import (
    LabeledState,
    apply,
    bosonic_mode,
    expectation,
    fidelity_pure,
    povm_element,
    tensor,
)

RNG = np.random.default_rng(23)


def site_state(chi=0.01, phi1=0.0, single=True, site="I", eta_as=1.0,
               depol=0.0):
    params = source.EnsembleParams(
        chi=chi, phi1=phi1, eta_as=eta_as,
        single_excitation_only=single, depol_weight=depol,
    )
    combined = source.combine_anti_stokes(source.write_joint_state(params, site), params)
    rho = combined.to_density()
    for m in rho.register[:2]:
        rho = apply(channels.loss_channel(m, eta_as), rho)
    if depol > 0.0:
        rho = apply(channels.depolarizing_twirl(rho.register[0], rho.register[1], depol), rho)
    return rho


def mem_target(register, phase=0.0):
    dims = tuple(m.dim for m in register)
    amp = np.zeros(dims, dtype=complex)
    amp[0, 1, 0, 1] = 1 / np.sqrt(2)  # both R rails occupied
    amp[1, 0, 1, 0] = np.exp(1j * phase) / np.sqrt(2)  # both L rails
    return LabeledState(tuple(register), amp.reshape(-1))


def ideal_swap(phi1_i=0.0, phi1_ii=0.0):
    rho_i = site_state(phi1=phi1_i, site="I")
    rho_ii = site_state(phi1=phi1_ii, site="II")
    return protocol.entanglement_swap_exact(rho_i, rho_ii, BSMStation())


class TestSwap:
    def test_ideal_sources_give_target_memory_state(self):
        _, rho_mem = ideal_swap()
        assert fidelity_pure(rho_mem, mem_target(rho_mem.register)) > 1 - 1e-9

    def test_phase_propagates_into_memory_state(self):
        _, rho_mem = ideal_swap(phi1_i=np.pi)
        assert fidelity_pure(rho_mem, mem_target(rho_mem.register, np.pi)) > 1 - 1e-9

    def test_pauli_signature_of_swapped_state(self):
        _, rho_mem = ideal_swap()
        names = [m.name for m in rho_mem.register]
        expected = {"X": 1.0, "Y": -1.0, "Z": 1.0}
        for which, value in expected.items():
            op = channels.dual_rail_pauli(which, rho_mem.register[0].dim - 1)
            joint = np.kron(op, op)
            # H-like rail is mem_r, so the Pauli acts on (mem_r, mem_l) per site
            acts = ("I.mem_r", "I.mem_l", "II.mem_r", "II.mem_l")
            got = expectation(rho_mem, povm_element(joint, acts))
            assert abs(got - value) < 1e-9

    def test_no_event_error_on_vacuum(self):
        params = source.EnsembleParams(chi=0.0)
        vac_i = source.combine_anti_stokes(source.write_joint_state(params, "I"), params)
        vac_ii = source.combine_anti_stokes(source.write_joint_state(params, "II"), params)
        with pytest.raises(protocol.NoEventError):
            protocol.entanglement_swap_exact(vac_i.to_density(), vac_ii.to_density(),
                                             BSMStation())

    def test_contraction_matches_generic_route_at_truncation_1(self):
        # independent route: full tensor product + measure_project + partial trace
        from repeatersim.optics import bsm_phi_plus_povm
        from repeatersim.qstate import measure_project, partial_trace

        def tiny_site(site, phi1):
            amp = np.zeros((2, 2, 2, 2), dtype=complex)
            amp[1, 0, 0, 1] = 1 / np.sqrt(2)
            amp[0, 1, 1, 0] = np.exp(1j * phi1) / np.sqrt(2)
            reg = tuple(
                bosonic_mode(f"{site}.{part}", 1)
                for part in ("as_h", "as_v", "mem_l", "mem_r")
            )
            return LabeledState(reg, amp.reshape(-1)).to_density()

        rho_i = tiny_site("I", 0.3)
        rho_ii = tiny_site("II", -1.1)
        station = BSMStation()
        fast = protocol.swap_conditional(rho_i, rho_ii, station)

        joint = tensor(rho_i, rho_ii)
        ph = [m for m in joint.register if ".as_" in m.name]
        elem = bsm_phi_plus_povm(station, ph)
        prob, post = measure_project(joint, elem)
        slow = partial_trace(post, [m.name for m in joint.register if ".mem_" in m.name])
        assert abs(fast.trace() - prob) < 1e-12
        assert np.max(np.abs(fast.matrix - slow.matrix)) < 1e-12


class TestDecoherence:
    def setup_method(self):
        _, self.rho_mem = ideal_swap()
        self.target = mem_target(self.rho_mem.register)

    def test_zero_time_identity(self):
        ch = protocol.MemoryChannel(tau=10.0, v0=1.0)
        out = protocol.decohere_memory(self.rho_mem, 0.0, ch)
        assert np.max(np.abs(out.matrix - self.rho_mem.matrix)) < 1e-12

    def test_long_time_kills_coherence(self):
        ch = protocol.MemoryChannel(tau=1.0, v0=1.0)
        out = protocol.decohere_memory(self.rho_mem, 1e6, ch)
        f = fidelity_pure(out, self.target)
        assert abs(f - 0.5) < 1e-9  # populations survive, coherence is gone

    def test_populations_unchanged(self):
        ch = protocol.MemoryChannel(tau=3.0, v0=0.9)
        out = protocol.decohere_memory(self.rho_mem, 2.5, ch)
        assert np.allclose(np.diag(out.matrix), np.diag(self.rho_mem.matrix), atol=1e-14)

    def test_single_excitation_coherence_factor_exact(self):
        ch = protocol.MemoryChannel(tau=4.0, v0=0.95)
        dt = 1.7
        out = protocol.decohere_memory(self.rho_mem, dt, ch)
        lam = ch.attenuation(dt)
        # each site contributes one factor on the |RR><LL| coherence
        f = fidelity_pure(out, self.target)
        assert abs(f - 0.5 * (1 + lam ** 2)) < 1e-12

    def test_fidelity_never_increases(self):
        ch = protocol.MemoryChannel(tau=7.3, v0=0.97)
        times = np.sort(RNG.uniform(0, 30, 25))
        last = 1.0
        for t in times:
            f = fidelity_pure(
                protocol.decohere_memory(self.rho_mem, float(t), ch), self.target
            )
            assert f <= last + 1e-12
            last = f

    def test_gaussian_model(self):
        ch = protocol.MemoryChannel(model="gaussian", tau=5.0, v0=1.0)
        assert abs(ch.attenuation(5.0) - np.exp(-1.0)) < 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            protocol.MemoryChannel(tau=0.0)
        with pytest.raises(ValueError):
            protocol.MemoryChannel(v0=0.0)
        with pytest.raises(ValueError):
            protocol.MemoryChannel(model="polynomial")
        with pytest.raises(ValueError):
            protocol.MemoryChannel().attenuation(-1.0)


class TestFalseEvents:
    def test_symmetric_leading_order_is_half(self):
        for chi in (0.005, 0.01):
            f = protocol.false_event_fraction(chi, chi)
            assert abs(f - 0.5) < 1e-12

    def test_one_site_postselected_gives_third(self):
        for chi in (0.005, 0.01):
            f = protocol.false_event_fraction(chi, chi, single_only_ii=True)
            assert abs(f - 1.0 / 3.0) < 1e-12

    def test_asymmetric_closed_form(self):
        a, b = 0.01, 0.004
        f = protocol.false_event_fraction(a, b)
        pred = (a * a + b * b) / 2 / (a * b + (a * a + b * b) / 2)
        assert abs(f - pred) < 1e-12

    def test_fourfold_conditioning_removes_false_events(self):
        for chi in (0.005, 0.01):
            f = protocol.false_event_fraction(chi, chi, fourfold_conditioned=True)
            assert f < 0.02

    def test_full_enumeration_orders(self):
        # three-photon events add an O(chi) surplus that conditioning suppresses
        f_small = protocol.false_event_fraction(0.002, 0.002, max_total_photons=None)
        f_large = protocol.false_event_fraction(0.01, 0.01, max_total_photons=None)
        assert 0.5 < f_small < f_large
        ff_small = protocol.false_event_fraction(
            0.002, 0.002, fourfold_conditioned=True, max_total_photons=None
        )
        ff_large = protocol.false_event_fraction(
            0.01, 0.01, fourfold_conditioned=True, max_total_photons=None
        )
        assert 0.0 < ff_small < ff_large < 0.05


class TestFourfoldMonotonicity:
    def test_conditioning_never_lowers_fidelity(self):
        station = BSMStation()
        for chi in (0.01, 0.03, 0.05):
            rho_i = site_state(chi=chi, single=False, site="I")
            rho_ii = site_state(chi=chi, single=False, site="II")
            _, rho_mem = protocol.entanglement_swap_exact(rho_i, rho_ii, station)
            unconditional = fidelity_pure(rho_mem, mem_target(rho_mem.register))
            weight, pair = protocol.fourfold_conditioned_pair(rho_mem)
            conditional = fidelity_pure(
                pair.unit(), source.pair_target(pair.register)
            )
            assert conditional >= unconditional - 1e-12


class TestPrecision:
    def test_unit_visibilities(self):
        est = protocol.estimate_local_precision(1.0, 1.0, 0.95)
        assert np.isclose(est.value, 0.95)
        assert not est.model_violation

    def test_quoted_visibilities(self):
        est = protocol.estimate_local_precision(0.92, 0.92, 0.80)
        assert abs(est.value - 0.80 / 0.8464) < 1e-12
        assert round(est.value, 3) == 0.945

    def test_perfect_operations(self):
        est = protocol.estimate_local_precision(0.9, 0.8, 0.72)
        assert np.isclose(est.value, 1.0)
        assert not est.model_violation

    def test_model_violation_flag(self):
        est = protocol.estimate_local_precision(0.9, 0.9, 0.9)
        assert est.model_violation
        assert est.value == 1.0
        assert est.raw > 1.0

    def test_range_validation(self):
        with pytest.raises(ValueError):
            protocol.estimate_local_precision(0.0, 0.9, 0.5)


class TestPhaseTrace:
    def test_success_trace_legal(self):
        protocol.validate_phase_trace(protocol.trial_phase_trace(True, True))
        protocol.validate_phase_trace(protocol.trial_phase_trace(True, False))
        protocol.validate_phase_trace(protocol.trial_phase_trace(False, False))

    def test_illegal_transition_caught(self):
        with pytest.raises(ValueError):
            protocol.validate_phase_trace(
                (protocol.NodePhase.IDLE, protocol.NodePhase.STORED)
            )

    def test_fourfold_requires_success(self):
        with pytest.raises(ValueError):
            protocol.SwapRecord(trial_id=0, bsm_success=False,
                                storage_time_us=0.5, fourfold=True)
        rec = protocol.SwapRecord(trial_id=1, bsm_success=True,
                                  storage_time_us=0.5, fourfold=True)
        assert rec.trial_id == 1
