"""End-to-end simulated experiments wired from a RunConfig.

Builds seeded phantom/phase/encoding instances, runs reconstructions under a
rank policy, and computes the evaluation quantities (PSNR against the known
ground truth, fixed-rank sweeps, direction ablations, multi-b-value ADC).
Used by both the command line and the acceptance suite.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ranknet
from .config import RunConfig
from .encoding import (CoilMaps, MultiShotKSpace, ShotSampling,
                       add_complex_noise, fft2c, forward_encode, simulate_coils,
                       make_shot_masks)
from .errors import ConfigError
from .metrics import ADC_SENTINEL, adc_fit, normalized_psnr
from .phantom import OrganRegion, Phantom, generate_phantom
from .phase import PhaseSpec, apply_phase, sample_phase_spec
from .solver import (FixedRank, LearnedRank, OracleRank, RankPolicy,
                     SolverConfig, SolverLogs, reconstruct, shot_combine,
                     zero_filled)

_INSTANCE_TAG = 9001
_ADC_TAG = 7333


@dataclass
class SimulatedInstance:
    """One synthetic acquisition with its ground truth."""

    phantom: Phantom
    phase_spec: PhaseSpec
    x_gt: np.ndarray            # clean shot k-space (J, M, N)
    gt_image: np.ndarray        # combined ground-truth image
    coils: CoilMaps
    sampling: ShotSampling
    y: MultiShotKSpace          # acquired (noisy, masked) data
    snr_db: float
    seed: int


def phantom_for(cfg: RunConfig, seed: int | None = None) -> Phantom:
    """The phantom a simulated instance with this config/seed is built on."""
    seed = cfg.seed if seed is None else seed
    words = np.random.SeedSequence((seed, _INSTANCE_TAG)).generate_state(4)
    p = cfg.phantom
    return generate_phantom(p.size_ro, p.size_pe, p.n_regions, int(words[0]),
                            tuple(p.magnitude_range))


def build_instance(cfg: RunConfig, seed: int | None = None) -> SimulatedInstance:
    """Phantom -> phases -> k-space -> coils/sampling -> noise, all seeded."""
    seed = cfg.seed if seed is None else seed
    words = np.random.SeedSequence((seed, _INSTANCE_TAG)).generate_state(4)
    p = cfg.phantom
    phantom = phantom_for(cfg, seed)
    ph = cfg.phase
    phase_spec = sample_phase_spec(
        phantom, ph.n_shots, tuple(ph.order_range), ph.coeff_scale, int(words[1]),
        order_overrides=ph.overrides(), zero_first_shot=ph.zero_first_shot)
    x_gt = fft2c(apply_phase(phantom, phase_spec).shots)
    coils = simulate_coils(p.size_ro, p.size_pe, cfg.encoding.n_coils, int(words[2]))
    sampling = make_shot_masks(ph.n_shots, p.size_pe, cfg.encoding.pattern,
                               cfg.encoding.rate)
    snr_db = cfg.encoding.snr()
    y = add_complex_noise(forward_encode(x_gt, coils, sampling), snr_db, int(words[3]))
    return SimulatedInstance(phantom, phase_spec, x_gt, shot_combine(x_gt),
                             coils, sampling, y, snr_db, seed)


def make_policy(cfg: RunConfig, inst: SimulatedInstance,
                weights: ranknet.RankNetWeights | None = None) -> RankPolicy:
    """Instantiate the configured rank policy for one instance."""
    spec = cfg.solver.rank_policy
    if spec.kind == "fixed":
        return FixedRank(spec.r)
    if spec.kind == "oracle":
        return OracleRank(inst.x_gt)
    if spec.kind == "learned":
        if weights is None:
            if not spec.weights:
                raise ConfigError("learned policy needs a weights path")
            weights = ranknet.load_weights(spec.weights)
        return LearnedRank(weights)
    raise ConfigError(f"unknown rank policy kind {spec.kind!r}")


def solver_config(cfg: RunConfig, policy: RankPolicy, threads: int = 1,
                  variant: str | None = None) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(
        lam=s.lam, iterations=s.iterations, window=s.window, rho=s.rho,
        tau=s.tau, cg_iters=s.cg_iters, cg_tol=s.cg_tol,
        variant=variant or s.variant, rank_policy=policy,
        ranks_every_iteration=s.ranks_every_iteration, threads=threads)


@dataclass
class ReconResult:
    x_hat: np.ndarray
    image: np.ndarray
    psnr: float
    psnr_zero_filled: float
    logs: SolverLogs


def run_recon(cfg: RunConfig, inst: SimulatedInstance, policy: RankPolicy,
              threads: int = 1, variant: str | None = None) -> ReconResult:
    """Reconstruct one instance and score it against its ground truth."""
    sconf = solver_config(cfg, policy, threads, variant)
    x_hat, logs = reconstruct(inst.y, inst.coils, inst.sampling, sconf)
    image = shot_combine(x_hat)
    zf_image = shot_combine(zero_filled(inst.y, inst.coils, inst.sampling))
    return ReconResult(
        x_hat, image,
        normalized_psnr(image, inst.gt_image),
        normalized_psnr(zf_image, inst.gt_image),
        logs)


def sweep_fixed_ranks(cfg: RunConfig, inst: SimulatedInstance,
                      ranks=None, threads: int = 1) -> list[tuple[int, float]]:
    """Reconstruct at every fixed rank; returns (r, PSNR) pairs.

    The default sweep covers r = 1..r_max of the shorter direction.
    """
    if ranks is None:
        J, M, N = inst.x_gt.shape
        w = cfg.solver.window
        r_cap = min(min(M, N) - w + 1, J * w)
        ranks = range(1, r_cap + 1)
    out = []
    for r in ranks:
        res = run_recon(cfg, inst, FixedRank(int(r)), threads)
        out.append((int(r), res.psnr))
    return out


def best_fixed_rank(sweep: list[tuple[int, float]]) -> tuple[int, float]:
    best_r, best_psnr = sweep[0]
    for r, p in sweep[1:]:
        if p > best_psnr:
            best_r, best_psnr = r, p
    return best_r, best_psnr


def ablate_variants(cfg: RunConfig, inst: SimulatedInstance, policy: RankPolicy,
                    threads: int = 1) -> dict[str, float]:
    """PSNR of the RO&PE / RO / PE variants plus the zero-filled baseline."""
    out = {}
    for variant in ("ro&pe", "ro", "pe"):
        out[variant] = run_recon(cfg, inst, policy, threads, variant=variant).psnr
    zf_image = shot_combine(zero_filled(inst.y, inst.coils, inst.sampling))
    out["zero-filled"] = normalized_psnr(zf_image, inst.gt_image)
    return out


# ---------------------------------------------------------------------------
# multi-b-value ADC experiment


def _decayed_phantom(base: Phantom, adc_map: dict[int, float], b_value: float) -> Phantom:
    regions = []
    magnitude = np.zeros_like(base.magnitude)
    for r in base.regions:
        value = r.magnitude_value * math.exp(-b_value * adc_map[r.id])
        regions.append(OrganRegion(r.id, r.mask, value, r.shape_params))
        magnitude[r.mask] = value
    return Phantom(base.size_ro, base.size_pe, regions, magnitude)


@dataclass
class AdcResult:
    adc_map: np.ndarray          # fitted map, -1 sentinel where unfittable
    true_map: dict               # region id -> generated ADC
    region_means: dict           # region id -> mean fitted ADC
    images: np.ndarray           # per-b combined reconstructions


def run_adc(cfg: RunConfig, threads: int = 1,
            weights: ranknet.RankNetWeights | None = None) -> AdcResult:
    """Full multi-b-value pipeline: decayed magnitudes, per-b acquisition and
    reconstruction, then per-pixel exponential fitting."""
    words = np.random.SeedSequence((cfg.seed, _ADC_TAG)).generate_state(3)
    p = cfg.phantom
    base = generate_phantom(p.size_ro, p.size_pe, p.n_regions, int(words[0]),
                            tuple(p.magnitude_range))
    rng = np.random.default_rng(int(words[1]))
    true_map = {}
    for region in base.regions:
        if region.id == 1:
            true_map[region.id] = cfg.eval.adc_true
        else:
            true_map[region.id] = float(rng.uniform(0.4e-3, 2.8e-3))

    b_values = [float(b) for b in cfg.eval.b_values]
    coils = simulate_coils(p.size_ro, p.size_pe, cfg.encoding.n_coils, int(words[2]))
    sampling = make_shot_masks(cfg.phase.n_shots, p.size_pe, cfg.encoding.pattern,
                               cfg.encoding.rate)
    images = []
    for bi, b in enumerate(b_values):
        sub = np.random.SeedSequence((cfg.seed, _ADC_TAG, bi)).generate_state(2)
        phantom_b = _decayed_phantom(base, true_map, b)
        pspec = sample_phase_spec(
            phantom_b, cfg.phase.n_shots, tuple(cfg.phase.order_range),
            cfg.phase.coeff_scale, int(sub[0]),
            order_overrides=cfg.phase.overrides(),
            zero_first_shot=cfg.phase.zero_first_shot)
        x_gt = fft2c(apply_phase(phantom_b, pspec).shots)
        y = add_complex_noise(forward_encode(x_gt, coils, sampling),
                              cfg.eval.adc_snr_db, int(sub[1]))
        inst = SimulatedInstance(phantom_b, pspec, x_gt, shot_combine(x_gt),
                                 coils, sampling, y, cfg.eval.adc_snr_db, cfg.seed)
        policy = make_policy(cfg, inst, weights)
        images.append(run_recon(cfg, inst, policy, threads).image)

    stack = np.stack(images)
    fitted = adc_fit(stack, b_values)
    region_means = {}
    for region in base.regions:
        vals = fitted[region.mask]
        vals = vals[vals != ADC_SENTINEL]
        region_means[region.id] = float(vals.mean()) if vals.size else math.nan
    return AdcResult(fitted, true_map, region_means, stack)
