"""ADMM reconstruction of multi-shot k-space with 1D Hankel low-rank priors.

Minimizes  lam/2 ||Y - U F C F^-1 X||_F^2  plus nuclear norms of the Hankel
lifts of every hybrid line along the active directions (readout, phase
encoding, or both). Each sweep truncates the lifted line-plus-dual matrices
at per-line ranks (fixed, oracle, or network-predicted), solves the
quadratic image subproblem by preconditioned conjugate gradients (the
Hankel normal term is the frame-weight diagonal in hybrid space), and takes
a scaled dual ascent step.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hankel, labels, ranknet
from .encoding import (CoilMaps, MultiShotKSpace, ShotSampling, adjoint_encode,
                       fft1c, forward_encode, ifft1c, ifft2c)
from .errors import LospError, NumericalError
from .parallel import map_chunks

log = logging.getLogger(__name__)

VARIANTS = ("ro&pe", "ro", "pe")


def active_directions(variant: str) -> tuple[str, ...]:
    if variant == "ro&pe":
        return ("ro", "pe")
    if variant in ("ro", "pe"):
        return (variant,)
    raise LospError(f"unknown solver variant {variant!r}")


# ---------------------------------------------------------------------------
# rank policies


@dataclass
class FixedRank:
    """The same truncation rank for every line."""

    r: int


@dataclass
class OracleRank:
    """Per-line exhaustive-traversal ranks against a clean reference
    (synthetic experiments only)."""

    reference: np.ndarray  # clean shot k-space (J, M, N)


@dataclass
class LearnedRank:
    """Per-line ranks predicted by a trained rank network."""

    weights: ranknet.RankNetWeights


RankPolicy = FixedRank | OracleRank | LearnedRank


@dataclass
class SolverConfig:
    lam: float = 1.0
    iterations: int = 20
    window: int = 10
    rho: float = 1.0
    tau: float = 1.0
    cg_iters: int = 10
    cg_tol: float = 1e-6
    variant: str = "ro&pe"
    rank_policy: RankPolicy = field(default_factory=lambda: FixedRank(8))
    ranks_every_iteration: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise LospError("lam must be >= 0")
        for name in ("iterations", "window", "rho", "tau", "cg_iters", "cg_tol"):
            if getattr(self, name) <= 0:
                raise LospError(f"{name} must be positive")
        active_directions(self.variant)


@dataclass
class SolverLogs:
    iteration: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    data_residual: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)


@dataclass
class SolverState:
    """Iterate plus the per-direction auxiliary and dual line stacks."""

    X: np.ndarray                      # (J, M, N) shot k-space
    Z: dict                            # direction -> (n_lines, rows, cols)
    D: dict                            # direction -> like Z
    specs: dict                        # direction -> HankelSpec
    config: SolverConfig
    iteration: int = 0
    logs: SolverLogs = field(default_factory=SolverLogs)


def direction_spec(direction: str, shape: tuple, window: int) -> hankel.HankelSpec:
    """HankelSpec of one line family of shot k-space shaped (J, M, N)."""
    J, M, N = shape
    length = M if direction == "ro" else N
    return hankel.HankelSpec(window, length, J)


def _lifted_lines(X: np.ndarray, direction: str, spec: hankel.HankelSpec) -> np.ndarray:
    return hankel.lift_stack(labels.lines_from_kspace(X, direction), spec)


def init_state(X0: np.ndarray, config: SolverConfig) -> SolverState:
    """Zero-filled initialization: Z holds the lifts of X0's lines, D = 0."""
    specs, Z, D = {}, {}, {}
    for direction in active_directions(config.variant):
        spec = direction_spec(direction, X0.shape, config.window)
        specs[direction] = spec
        Z[direction] = _lifted_lines(X0, direction, spec)
        D[direction] = np.zeros_like(Z[direction])
    return SolverState(X0.copy(), Z, D, specs, config)


# ---------------------------------------------------------------------------
# per-line updates


def update_aux(state: SolverState, direction: str, line_index: int, rank: int) -> np.ndarray:
    """Truncated-SVD update of one auxiliary matrix:
    Z = S_r(H(line of X) + D/rho)."""
    spec = _active_spec(state, direction)
    lines = labels.lines_from_kspace(state.X, direction)
    g = hankel.lift(lines[line_index], spec) + state.D[direction][line_index] / state.config.rho
    truncated, _ = hankel.truncate_svd(g, min(max(rank, 1), spec.r_max))
    return truncated


def _active_spec(state: SolverState, direction: str) -> hankel.HankelSpec:
    if direction not in state.specs:
        raise LospError(f"direction {direction!r} is not active in variant "
                        f"{state.config.variant!r}")
    return state.specs[direction]


def resolve_ranks(state: SolverState, policy: RankPolicy, direction: str) -> np.ndarray:
    """Per-line truncation ranks for one direction on the current iterate.

    Oracle and learned policies evaluate the de-lifted line-plus-dual
    expression (at iteration 0 with D = 0 this is exactly the current line).
    """
    spec = _active_spec(state, direction)
    lifted = _lifted_lines(state.X, direction, spec) + state.D[direction] / state.config.rho
    n_lines = lifted.shape[0]
    if isinstance(policy, FixedRank):
        if not 1 <= policy.r:
            raise LospError("fixed rank must be >= 1")
        return np.full(n_lines, min(policy.r, spec.r_max), dtype=np.int64)

    expr = hankel.delift_stack(lifted, spec)
    peaks = np.max(np.abs(expr), axis=(1, 2))
    normalized = expr / np.where(peaks > 0, peaks, 1.0)[:, None, None]

    if isinstance(policy, LearnedRank):
        return ranknet.predict_ranks(policy.weights, normalized, spec)

    if isinstance(policy, OracleRank):
        if policy.reference is None:
            raise LospError("oracle rank policy requires a clean reference")
        if policy.reference.shape != state.X.shape:
            raise LospError("oracle reference shape does not match the iterate")
        ref_lines = labels.lines_from_kspace(policy.reference, direction)
        ranks = np.empty(n_lines, dtype=np.int64)
        for i in range(n_lines):
            noisy = labels.make_hybrid_line(direction, i, normalized[i])
            clean = labels.make_hybrid_line(direction, i, ref_lines[i])
            ranks[i], _ = labels.optimal_rank(noisy, clean, spec)
        return ranks

    raise LospError(f"unknown rank policy {type(policy).__name__}")


def update_duals(state: SolverState, tau: float) -> dict:
    """Scaled dual ascent D += tau (H(lines of X) - Z) for every line."""
    for direction, spec in state.specs.items():
        lifted = _lifted_lines(state.X, direction, spec)
        state.D[direction] = state.D[direction] + tau * (lifted - state.Z[direction])
    return state.D


# ---------------------------------------------------------------------------
# image subproblem


def _hankel_normal(X: np.ndarray, direction: str, weights: np.ndarray) -> np.ndarray:
    """F_dir diag(frame weights) F_dir^-1 applied in hybrid space."""
    axis = 2 if direction == "ro" else 1
    hybrid = ifft1c(X, axis=axis)
    if direction == "ro":
        hybrid *= weights[None, :, None]
    else:
        hybrid *= weights[None, None, :]
    return fft1c(hybrid, axis=axis)


def _cg(apply_op, b, x0, iters, tol, precond):
    """Preconditioned conjugate gradients for a Hermitian PD operator."""
    x = x0.copy()
    r = b - apply_op(x)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b), 0, 0.0
    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    rel = float(np.linalg.norm(r)) / norm_b
    used = 0
    for _ in range(iters):
        if rel <= tol:
            break
        ap = apply_op(p)
        denom = float(np.vdot(p, ap).real)
        if denom <= 0.0:
            break
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        rel = float(np.linalg.norm(r)) / norm_b
        z = precond(r)
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
        used += 1
    return x, used, rel


def update_image(state: SolverState, Y: MultiShotKSpace, coils: CoilMaps,
                 sampling: ShotSampling, config: SolverConfig) -> np.ndarray:
    """Solve the quadratic X subproblem by preconditioned CG.

    Normal operator: lam A*A + rho sum_dir F_dir diag(w) F_dir^-1, with
    A the sampled coil-encoding operator; right-hand side
    lam A*Y + rho sum_dir F_dir S* H* (Z - D/rho).
    """
    dirs = list(state.specs)
    weights = {d: hankel.frame_weights(state.specs[d]).astype(np.float64) for d in dirs}
    masks = sampling.masks.astype(np.float64)

    def apply_op(X):
        out = np.zeros_like(X)
        if config.lam > 0:
            encoded = forward_encode(X, coils, sampling)
            out += config.lam * adjoint_encode(encoded, coils, sampling)
        for d in dirs:
            out += config.rho * _hankel_normal(X, d, weights[d])
        return out

    rhs = np.zeros_like(state.X)
    if config.lam > 0:
        rhs += config.lam * adjoint_encode(Y, coils, sampling)
    for d in dirs:
        v = state.Z[d] - state.D[d] / config.rho
        rhs += config.rho * labels.kspace_from_lines(
            hankel.adjoint_stack(v, state.specs[d]), d)

    diag = np.zeros(state.X.shape, dtype=np.float64)
    diag += config.lam * masks[:, None, :]
    for d in dirs:
        if d == "ro":
            diag += config.rho * weights[d][None, :, None]
        else:
            diag += config.rho * weights[d][None, None, :]

    def precond(r):
        return r / diag

    x, used, rel = _cg(apply_op, rhs, state.X, config.cg_iters, config.cg_tol, precond)
    if rel > config.cg_tol:
        log.warning("CG stopped after %d iterations at relative residual %.3e "
                    "(tolerance %.1e)", used, rel, config.cg_tol)
    if not np.all(np.isfinite(x.view(np.float64))):
        raise NumericalError("non-finite values in the image update")
    return x


# ---------------------------------------------------------------------------
# full reconstruction


def _objective(X, Y, coils, sampling, state: SolverState, config: SolverConfig) -> tuple[float, float]:
    resid = Y.data - forward_encode(X, coils, sampling).data
    data_res = float(np.linalg.norm(resid))
    obj = 0.5 * config.lam * data_res ** 2
    for d, spec in state.specs.items():
        sigmas = np.linalg.svd(_lifted_lines(X, d, spec), compute_uv=False)
        obj += float(sigmas.sum())
    return obj, data_res


def reconstruct(Y: MultiShotKSpace, coils: CoilMaps, sampling: ShotSampling,
                config: SolverConfig) -> tuple[np.ndarray, SolverLogs]:
    """Run ``config.iterations`` ADMM sweeps from the zero-filled iterate.

    Returns the final shot k-space (J, M, N) and per-iteration logs
    (objective, primal residual, data residual, wall time).
    """
    if not np.all(np.isfinite(Y.data.view(np.float64))):
        raise NumericalError("acquired data contains non-finite values")
    X0 = adjoint_encode(Y, coils, sampling)
    state = init_state(X0, config)
    policy = config.rank_policy
    if isinstance(policy, OracleRank) and policy.reference is None:
        raise LospError("oracle rank policy requires a clean reference")
    frozen: dict = {}

    for it in range(config.iterations):
        t0 = time.perf_counter()
        for d in state.specs:
            spec = state.specs[d]
            if config.ranks_every_iteration or d not in frozen:
                ranks = resolve_ranks(state, policy, d)
                frozen[d] = ranks
            else:
                ranks = frozen[d]
            g = _lifted_lines(state.X, d, spec) + state.D[d] / config.rho
            z_new = np.empty_like(g)

            def worker(lo, hi, g=g, z_new=z_new, ranks=ranks):
                z_new[lo:hi] = hankel.truncate_stack(g[lo:hi], ranks[lo:hi])

            try:
                map_chunks(worker, g.shape[0], config.threads)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"SVD failure at iteration {it}: {exc}") from exc
            state.Z[d] = z_new

        state.X = update_image(state, Y, coils, sampling, config)

        primal = 0.0
        for d, spec in state.specs.items():
            lifted = _lifted_lines(state.X, d, spec)
            primal += float(np.sum(np.linalg.norm(
                lifted - state.Z[d], axis=(1, 2))))
            state.D[d] = state.D[d] + config.tau * (lifted - state.Z[d])

        obj, data_res = _objective(state.X, Y, coils, sampling, state, config)
        if not math.isfinite(obj):
            raise NumericalError(f"non-finite objective at iteration {it}")
        state.iteration = it + 1
        state.logs.iteration.append(it)
        state.logs.objective.append(obj)
        state.logs.primal_residual.append(primal)
        state.logs.data_residual.append(data_res)
        state.logs.wall_time.append(time.perf_counter() - t0)

    return state.X, state.logs


def shot_combine(X: np.ndarray) -> np.ndarray:
    """Root-sum-of-squares shot combination of shot k-space (J, M, N)."""
    imgs = ifft2c(np.asarray(X, dtype=np.complex128))
    return np.sqrt(np.sum(np.abs(imgs) ** 2, axis=0))


def zero_filled(Y: MultiShotKSpace, coils: CoilMaps, sampling: ShotSampling) -> np.ndarray:
    """Adjoint-only baseline reconstruction (shot k-space)."""
    return adjoint_encode(Y, coils, sampling)
