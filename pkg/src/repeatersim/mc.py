"""Seeded Monte Carlo engine: clicks only, like the lab.

Per trial the engine samples the slow noise (storage phase diffusion,
interferometer lock jitter, white-noise Pauli, mode-overlap branch), then
the photon occupations of the heralding detectors, thins each photon
through the detection budget, ORs in dark counts and applies the
coincidence logic; heralded trials continue through readout sampling and
the verification analyzers.  All randomness comes from counter-based
streams keyed by (seed, setting, trial, slot), so counts are bit-identical
for any worker partitioning.

The occupation distributions and conditional amplitudes are exact
consequences of the same mode transforms the exact engine uses; the two
engines still form independent routes because detection here is stochastic
thinning of sampled occupations rather than POVM algebra.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np

from . import rng, source
from .exact import StationParams
from .fock import lift_isometry, occupation_basis
from .optics import Analyzer, bsm_mode_matrix, bsm_tagged_mode_matrix
from .protocol import MemoryChannel

CHUNK = 1 << 15

# slot layout within a trial's draw budget
SLOT_MEM_PHASE = (0, 1)
SLOT_JITTER = (2, 3)
SLOT_TWIRL_I = 4
SLOT_TWIRL_II = 5
SLOT_BRANCH = 6
SLOT_BSM_KET = 7
SLOT_BSM_THIN = 8     # 4 detectors x up to MAX_PHOTONS each
SLOT_BSM_DARK = 32
SLOT_AN_KET = 36
SLOT_AN_THIN = 40     # 4 ports x up to MAX_PHOTONS each
SLOT_AN_DARK = 64

# photons a single detector can receive (two truncated modes feed each)
MAX_PHOTONS = 6

OUTCOME_KEYS = ("pp", "pm", "mp", "mm")
TWIRLS = ("I", "X", "Y", "Z")


@dataclass
class CountsRow:
    setting_1: object
    setting_4: object
    n_pp: int = 0
    n_pm: int = 0
    n_mp: int = 0
    n_mm: int = 0
    attempts: int = 0

    def as_dict(self) -> dict:
        return {
            "setting_1": self.setting_1, "setting_4": self.setting_4,
            "n_pp": self.n_pp, "n_pm": self.n_pm, "n_mp": self.n_mp,
            "n_mm": self.n_mm, "attempts": self.attempts,
        }

    def outcome_total(self) -> int:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm


@dataclass
class CountsTable:
    rows: list = field(default_factory=list)
    seed: int = 0

    def row_for(self, setting_1, setting_4) -> CountsRow:
        for row in self.rows:
            if row.setting_1 == setting_1 and row.setting_4 == setting_4:
                return row
        raise KeyError(f"no counts for setting ({setting_1}, {setting_4})")


def setting_analyzer(spec) -> Analyzer:
    if spec == "circ":
        return Analyzer(0.0, "circular")
    return Analyzer(float(spec))


# ---------------------------------------------------------------------------
# precomputation


@dataclass
class _SitePre:
    support: list            # (n_l, n_r) kets with nonzero write amplitude
    psi: np.ndarray          # their complex amplitudes (phi1 included)
    delta: np.ndarray        # n_l - n_r, the storage-phase weight
    n_l: np.ndarray          # V-rail photon number, the jitter-phase weight
    as_occ: dict             # twirl -> list of transformed (n_h, n_v) kets
    as_phase: dict           # twirl -> complex phase per support ket
    twirl_cdf: np.ndarray
    sigma_jitter: float
    eta_verify: float        # retrieval x collection survival per readout photon


def _site_pre(params: source.EnsembleParams, site: str, lam: float) -> _SitePre:
    combined = source.combine_anti_stokes(source.write_joint_state(params, site), params)
    dims = combined.dims
    amp = combined.amplitudes.reshape(dims)
    support, psi = [], []
    d = dims[0]
    for nh in range(d):
        for nv in range(d):
            # photon-number correlation pins the memory to (n_l, n_r) = (nv, nh)
            value = amp[nh, nv, nv, nh]
            if abs(value) > 1e-15:
                support.append((nv, nh))
                psi.append(value)
    psi = np.array(psi, dtype=complex)
    n_l = np.array([m[0] for m in support])
    n_r = np.array([m[1] for m in support])
    as_occ, as_phase = {}, {}
    for tw in TWIRLS:
        occ, phase = [], []
        for nl, nr in support:
            nh, nv = nr, nl
            if tw in ("X", "Y"):
                nh, nv = nv, nh
            if tw == "Y":
                phase.append((1j) ** (nr) * (-1j) ** (nl))
            elif tw == "Z":
                phase.append((-1.0) ** nl)
            else:
                phase.append(1.0)
            occ.append((nh, nv))
        as_occ[tw] = occ
        as_phase[tw] = np.array(phase, dtype=complex)
    w = params.depol_weight
    twirl_cdf = np.cumsum([1.0 - 0.75 * w, 0.25 * w, 0.25 * w, 0.25 * w])
    return _SitePre(
        support=support, psi=psi, delta=(n_l - n_r).astype(float),
        n_l=n_l.astype(float), as_occ=as_occ, as_phase=as_phase,
        twirl_cdf=twirl_cdf, sigma_jitter=params.phase_jitter_std,
        eta_verify=params.eta_ret * params.eta_s,
    )


def _sigma_from_attenuation(lam: float) -> float:
    lam = min(max(lam, 1e-300), 1.0)
    return sqrt(-2.0 * np.log(lam))


@dataclass
class _BsmBranch:
    gamma: np.ndarray        # |out ket> amplitudes per input occupation column
    in_index: dict
    det_counts: np.ndarray   # (n_out, 4) detector photon numbers


def _bsm_branch(n_max: int, tagged: bool) -> _BsmBranch:
    dims = (n_max + 1,) * 4
    matrix = bsm_tagged_mode_matrix() if tagged else bsm_mode_matrix()
    gamma, out_basis, in_basis = lift_isometry(matrix, dims)
    in_index = {occ: j for j, occ in enumerate(in_basis)}
    if tagged:
        det = np.array([[k[0] + k[4], k[1] + k[5], k[2] + k[6], k[3] + k[7]]
                        for k in out_basis], dtype=np.int64)
    else:
        det = np.array(out_basis, dtype=np.int64)
    return _BsmBranch(gamma=gamma, in_index=in_index, det_counts=det)


@dataclass
class _BsmGroup:
    branch: _BsmBranch
    colmap: np.ndarray       # support-pair -> gamma column
    pair_phase: np.ndarray   # twirl phases per support pair
    cdf: np.ndarray          # occupation distribution over out kets


@dataclass
class McPrecomp:
    site_i: _SitePre
    site_ii: _SitePre
    groups: dict             # (tw_i, tw_ii, tagged) -> _BsmGroup
    sigma_mem: float
    eta_bsm: float
    dark_bsm: float
    dark_verify: float
    mode_overlap: float
    pair_weight: np.ndarray  # |psi_i|^2 x |psi_ii|^2 per support pair


def mc_precompute(site_i: source.EnsembleParams, site_ii: source.EnsembleParams,
                  station_params: StationParams, memory: MemoryChannel,
                  storage_time_us: float) -> McPrecomp:
    if abs(site_i.eta_as - site_ii.eta_as) > 1e-12:
        raise ValueError(
            "monte-carlo engine folds anti-Stokes losses into detector thinning, "
            "which requires equal eta_as at both sites"
        )
    if site_i.truncation != site_ii.truncation:
        raise ValueError("sites must share a truncation")
    if 2 * site_i.truncation > 6:
        raise ValueError("sampling supports truncation <= 3 (draw-slot budget)")
    lam = memory.attenuation(storage_time_us)
    pre_i = _site_pre(site_i, source.SITE_I, lam)
    pre_ii = _site_pre(site_ii, source.SITE_II, lam)
    n_max = site_i.truncation
    branches = {False: _bsm_branch(n_max, False)}
    if station_params.mode_overlap < 1.0:
        branches[True] = _bsm_branch(n_max, True)
    weight = np.outer(np.abs(pre_i.psi) ** 2, np.abs(pre_ii.psi) ** 2).reshape(-1)
    groups = {}
    for tw_i in TWIRLS:
        for tw_ii in TWIRLS:
            for tagged, branch in branches.items():
                cols, phases = [], []
                for a, occ_a in enumerate(pre_i.as_occ[tw_i]):
                    for b, occ_b in enumerate(pre_ii.as_occ[tw_ii]):
                        cols.append(branch.in_index[occ_a + occ_b])
                        phases.append(pre_i.as_phase[tw_i][a] * pre_ii.as_phase[tw_ii][b])
                colmap = np.array(cols, dtype=np.int64)
                probs = (np.abs(branch.gamma[:, colmap]) ** 2) @ weight
                cdf = np.cumsum(probs)
                cdf /= cdf[-1]
                groups[(tw_i, tw_ii, tagged)] = _BsmGroup(
                    branch=branch, colmap=colmap,
                    pair_phase=np.array(phases, dtype=complex), cdf=cdf,
                )
    return McPrecomp(
        site_i=pre_i, site_ii=pre_ii, groups=groups,
        sigma_mem=_sigma_from_attenuation(lam),
        eta_bsm=site_i.eta_as * station_params.det_eta,
        dark_bsm=station_params.dark_prob,
        dark_verify=station_params.dark_prob,
        mode_overlap=station_params.mode_overlap,
        pair_weight=weight,
    )


@dataclass
class _AnalyzerPre:
    matrix: np.ndarray       # (n_out, n_support) conditional readout amplitudes
    ports: np.ndarray        # (n_out, 2) port occupations


def _analyzer_pre(analyzer: Analyzer, site_pre: _SitePre,
                  params: source.EnsembleParams, n_max: int) -> _AnalyzerPre:
    dims = (n_max + 1,) * 2
    gamma, out_basis, in_basis = lift_isometry(analyzer.mode_matrix(), dims)
    in_index = {occ: j for j, occ in enumerate(in_basis)}
    cols = []
    phases = []
    for nl, nr in site_pre.support:
        cols.append(in_index[(nr, nl)])  # stokes (n_h, n_v) = (n_r, n_l)
        phases.append(np.exp(1j * params.phi2 * nl))
    matrix = gamma[:, cols] * np.asarray(phases)[None, :]
    return _AnalyzerPre(matrix=matrix, ports=np.array(out_basis, dtype=np.int64))


# ---------------------------------------------------------------------------
# sampling kernel


def _thin_counts(key, trials, counts, base_slot, eta) -> np.ndarray:
    """Binomial survivors via one uniform draw per potential photon."""
    survivors = np.zeros(len(trials), dtype=np.int64)
    for p in range(MAX_PHOTONS):
        u = rng.uniforms(key, trials, base_slot + p)
        survivors += ((u < eta) & (counts > p)).astype(np.int64)
    return survivors


def _chunk_kernel(pre: McPrecomp, an_i: _AnalyzerPre, an_ii: _AnalyzerPre,
                  params_i: source.EnsembleParams, params_ii: source.EnsembleParams,
                  key: np.uint64, start: int, stop: int) -> np.ndarray:
    trials = np.arange(start, stop, dtype=np.uint64)
    n = len(trials)
    counts = np.zeros(4, dtype=np.int64)

    tw_i = np.searchsorted(pre.site_i.twirl_cdf, rng.uniforms(key, trials, SLOT_TWIRL_I),
                           side="right")
    tw_ii = np.searchsorted(pre.site_ii.twirl_cdf, rng.uniforms(key, trials, SLOT_TWIRL_II),
                            side="right")
    tagged = rng.uniforms(key, trials, SLOT_BRANCH) >= pre.mode_overlap
    if pre.mode_overlap >= 1.0:
        tagged[:] = False
    u_ket = rng.uniforms(key, trials, SLOT_BSM_KET)

    det = np.zeros((n, 4), dtype=np.int64)
    k_idx = np.zeros(n, dtype=np.int64)
    group_of = {}
    gid = (np.minimum(tw_i, 3) * 4 + np.minimum(tw_ii, 3)) * 2 + tagged
    for g in np.unique(gid):
        sel = np.where(gid == g)[0]
        tw_a = TWIRLS[int(g) // 8]
        tw_b = TWIRLS[(int(g) // 2) % 4]
        group = pre.groups[(tw_a, tw_b, bool(int(g) % 2))]
        group_of[int(g)] = group
        idx = np.searchsorted(group.cdf, u_ket[sel], side="right")
        idx = np.minimum(idx, len(group.cdf) - 1)
        k_idx[sel] = idx
        det[sel] = group.branch.det_counts[idx]

    clicks = np.zeros((n, 4), dtype=bool)
    for d in range(4):
        surv = _thin_counts(key, trials, det[:, d], SLOT_BSM_THIN + MAX_PHOTONS * d,
                            pre.eta_bsm)
        dark = rng.uniforms(key, trials, SLOT_BSM_DARK + d) < pre.dark_bsm
        clicks[:, d] = (surv > 0) | dark
    herald = (clicks[:, 0] & clicks[:, 2]) | (clicks[:, 1] & clicks[:, 3])

    if not herald.any():
        return counts

    theta_i, theta_ii = rng.normal_pairs(key, trials, *SLOT_MEM_PHASE)
    jit_i, jit_ii = rng.normal_pairs(key, trials, *SLOT_JITTER)
    n_support_ii = len(pre.site_ii.support)
    for t in np.where(herald)[0]:
        group = group_of[int(gid[t])]
        amp_pair = group.branch.gamma[k_idx[t], group.colmap] * group.pair_phase
        phase_i = np.exp(1j * (pre.sigma_mem * theta_i[t] * pre.site_i.delta / 2.0
                               + pre.site_i.sigma_jitter * jit_i[t] * pre.site_i.n_l))
        phase_ii = np.exp(1j * (pre.sigma_mem * theta_ii[t] * pre.site_ii.delta / 2.0
                                + pre.site_ii.sigma_jitter * jit_ii[t] * pre.site_ii.n_l))
        joint = (pre.site_i.psi * phase_i)[:, None] * (pre.site_ii.psi * phase_ii)[None, :]
        c = joint.reshape(-1) * amp_pair
        c = c.reshape(len(pre.site_i.support), n_support_ii)
        b = an_i.matrix @ c @ an_ii.matrix.T
        probs = np.abs(b) ** 2
        total = probs.sum()
        if total <= 0.0:
            continue
        flat = np.cumsum(probs.reshape(-1)) / total
        trial_arr = trials[t:t + 1]
        pick = int(np.searchsorted(flat, rng.uniforms(key, trial_arr, SLOT_AN_KET)[0],
                                   side="right"))
        pick = min(pick, probs.size - 1)
        ports_i = an_i.ports[pick // probs.shape[1]]
        ports_ii = an_ii.ports[pick % probs.shape[1]]
        occ = np.array([ports_i[0], ports_i[1], ports_ii[0], ports_ii[1]])
        site_eta = (pre.site_i.eta_verify, pre.site_i.eta_verify,
                    pre.site_ii.eta_verify, pre.site_ii.eta_verify)
        port_clicks = []
        for p in range(4):
            surv = _thin_counts(key, trial_arr, occ[p:p + 1],
                                SLOT_AN_THIN + MAX_PHOTONS * p, site_eta[p])[0]
            dark = rng.uniforms(key, trial_arr, SLOT_AN_DARK + p)[0] < pre.dark_verify
            port_clicks.append(surv > 0 or dark)
        one_i = port_clicks[0] != port_clicks[1]
        one_ii = port_clicks[2] != port_clicks[3]
        if not (one_i and one_ii):
            continue
        o1 = 0 if port_clicks[0] else 1
        o4 = 0 if port_clicks[2] else 1
        counts[o1 * 2 + o4] += 1
    return counts


def run_monte_carlo(site_i: source.EnsembleParams, site_ii: source.EnsembleParams,
                    station_params: StationParams, memory: MemoryChannel,
                    storage_time_us: float, settings, n_trials: int, master_seed: int,
                    n_workers: int = 1) -> CountsTable:
    """Sampled coincidence counts, one row per analyzer-setting pair.

    Each setting draws from its own stream; trial streams depend only on
    (master_seed, setting index, trial index), so results are bit-identical
    across reruns and worker counts and merge by plain addition.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    pre = mc_precompute(site_i, site_ii, station_params, memory, storage_time_us)
    n_max = site_i.truncation
    table = CountsTable(rows=[], seed=master_seed)
    chunks = [(s, min(s + CHUNK, n_trials)) for s in range(0, n_trials, CHUNK)]
    for stream, (s1, s4) in enumerate(settings):
        an_i = _analyzer_pre(setting_analyzer(s1), pre.site_i, site_i, n_max)
        an_ii = _analyzer_pre(setting_analyzer(s4), pre.site_ii, site_ii, n_max)
        key = rng.stream_key(master_seed, stream)

        def work(span):
            return _chunk_kernel(pre, an_i, an_ii, site_i, site_ii, key, *span)

        if n_workers > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(span) for span in chunks]
        totals = np.sum(parts, axis=0)
        table.rows.append(CountsRow(
            setting_1=s1, setting_4=s4,
            n_pp=int(totals[0]), n_pm=int(totals[1]),
            n_mp=int(totals[2]), n_mm=int(totals[3]),
            attempts=n_trials,
        ))
    return table
