"""Simulation and exact covariance propagation for the coupled recursions.

Determinism contract
--------------------
Every standardized draw is a pure function of (base_seed, replica, step).
Replicas are grouped into chunks of NOISE_CHUNK and steps into blocks of
noise_block_steps(d) for joint noise dimension d; one keyed generator fills
a whole (chunk, block) tile at a time, and the draw for (replica, step,
coordinate c) is the tile entry
[replica mod chunk, (step mod block) * d + c].  Tile shapes are fixed
functions of d alone, so which values a replica sees never depends on N, K,
checkpoints, chunk scheduling, or the degree of parallelism: results are
bit-identical for any --jobs setting and replay exactly.

Ensembles advance all replicas of a chunk through a noise block at once by
composing the per-step affine updates into one transition matrix and one
noise-weight matrix per segment (a single GEMM per chunk and segment).
Exact covariance propagation composes the same per-step maps on the
vectorized second moment, reducing a million steps to a few hundred batched
matrix products.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, NotPSD
from .linalg import factor_covariance, symmetrize
from .model import SystemSpec, delta_matrix, fixed_point
from .schedules import SchedulePair
from .theory import LSequence, l_sequence

DIVERGENCE_CUTOFF = 1e12
NOISE_CHUNK = 64  # replicas per noise tile
_MASK64 = (1 << 64) - 1
_PROPAGATE_CHUNK_BYTES = 64 * 1024 * 1024


def noise_block_steps(dim: int) -> int:
    """Steps per noise tile; sized so a tile stays cache-resident.

    Part of the stream layout contract: a fixed function of the joint noise
    dimension only, so draws never depend on run parameters.
    """
    return max(256, 4096 // dim)


# ---------------------------------------------------------------------------
# noise streams


def _tile_generator(base_seed: int, chunk_idx: int, block_idx: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=(base_seed & _MASK64, chunk_idx, block_idx))
    return np.random.Generator(np.random.SFC64(seq))


def _standard_tile(
    base_seed: int, chunk_idx: int, block_idx: int, dim: int, distribution: str
) -> np.ndarray:
    """Standardized draws for one (replica chunk, step block) tile.

    Shape (NOISE_CHUNK, noise_block_steps(dim) * dim); row r holds the draws
    of replica chunk_idx * NOISE_CHUNK + r for the block's steps, step-major.
    """
    gen = _tile_generator(base_seed, chunk_idx, block_idx)
    block = noise_block_steps(dim)
    count = NOISE_CHUNK * block * dim
    if distribution == "gaussian":
        vals = gen.standard_normal(count)
    else:
        # Unit-variance signs; one uniform per value keeps the tile layout
        # identical for both distributions.
        vals = np.where(gen.random(count) < 0.5, -1.0, 1.0)
    return vals.reshape(NOISE_CHUNK, block * dim)


class _ChunkNoise:
    """Sequential reader of standardized noise for one replica chunk."""

    def __init__(self, base_seed: int, chunk_idx: int, rows: int, dim: int, distribution: str):
        self.base_seed = base_seed
        self.chunk_idx = chunk_idx
        self.rows = rows
        self.dim = dim
        self.distribution = distribution
        self._block_idx = -1
        self._tile: np.ndarray | None = None

    def _fill(self, block_idx: int) -> np.ndarray:
        if block_idx != self._block_idx:
            self._tile = _standard_tile(
                self.base_seed, self.chunk_idx, block_idx, self.dim, self.distribution
            )
            self._block_idx = block_idx
        return self._tile

    def segment(self, a: int, b: int) -> np.ndarray:
        """Standardized draws for steps [a, b) as (rows, (b-a)*dim)."""
        d = self.dim
        block = noise_block_steps(d)
        parts = []
        step = a
        while step < b:
            block_idx = step // block
            tile = self._fill(block_idx)
            lo = (step - block_idx * block) * d
            stop = min(b, (block_idx + 1) * block)
            hi = (stop - block_idx * block) * d
            parts.append(tile[: self.rows, lo:hi])
            step = stop
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


@dataclass
class NoiseStream:
    """Per-replica noise view mapping standardized draws through a joint factor."""

    base_seed: int
    replica: int
    factor: np.ndarray
    distribution: str = "gaussian"

    def __post_init__(self):
        self._reader: _ChunkNoise | None = None

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    def standard_range(self, a: int, b: int) -> np.ndarray:
        """Standardized draws of this replica for steps [a, b), shape (b-a, dim)."""
        chunk_idx, row = divmod(self.replica, NOISE_CHUNK)
        if self._reader is None:
            self._reader = _ChunkNoise(
                self.base_seed, chunk_idx, NOISE_CHUNK, self.dim, self.distribution
            )
        return self._reader.segment(a, b)[row].reshape(b - a, self.dim)

    def blocks(self, K: int, block: int | None = None):
        """Yield consecutive (steps, dim) correlated draws (V | W) covering steps 0..K-1."""
        Ft = self.factor.T
        block = block or noise_block_steps(self.dim)
        done = 0
        while done < K:
            stop = min(K, done + block)
            yield self.standard_range(done, stop) @ Ft
            done = stop

    def draws(self, K: int) -> np.ndarray:
        """All correlated draws for steps 0..K-1 in one array."""
        return np.concatenate(list(self.blocks(K)), axis=0)


def noise_stream(spec: SystemSpec, base_seed: int, replica: int) -> NoiseStream:
    """Noise stream for one replica of a system's joint noise model."""
    return NoiseStream(
        base_seed=base_seed,
        replica=replica,
        factor=factor_covariance(spec.noise.joint()),
        distribution=spec.noise.distribution,
    )


# ---------------------------------------------------------------------------
# single trajectories


@dataclass(frozen=True)
class TrajectoryState:
    k: int
    theta: np.ndarray
    r: np.ndarray


def _check_finite(k: int, *vecs: np.ndarray) -> None:
    for v in vecs:
        m = float(np.max(np.abs(v))) if v.size else 0.0
        if not np.isfinite(m) or m > DIVERGENCE_CUTOFF:
            raise Diverged(k)


def _init_vectors(spec: SystemSpec, init) -> tuple[np.ndarray, np.ndarray]:
    if init is None:
        return np.zeros(spec.n), np.zeros(spec.m)
    theta0 = np.asarray(init[0], dtype=np.float64).reshape(spec.n)
    r0 = np.asarray(init[1], dtype=np.float64).reshape(spec.m)
    return theta0.copy(), r0.copy()


def simulate(
    spec: SystemSpec,
    pair: SchedulePair,
    init,
    K: int,
    noise: NoiseStream,
    record_stride: int = 1,
) -> list[TrajectoryState]:
    """Run the coupled recursion for K steps, recording every record_stride steps."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if record_stride < 1:
        raise ValueError("record_stride must be at least 1")
    theta, r = _init_vectors(spec, init)
    n = spec.n
    betas = pair.slow.values(np.arange(K))
    gammas = pair.fast.values(np.arange(K))

    states = [TrajectoryState(0, theta.copy(), r.copy())]
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for block in noise.blocks(K):
            for row in block:
                theta_new = theta + betas[k] * (spec.b1 - spec.A11 @ theta - spec.A12 @ r + row[:n])
                r_new = r + gammas[k] * (spec.b2 - spec.A21 @ theta - spec.A22 @ r + row[n:])
                theta, r = theta_new, r_new
                k += 1
                _check_finite(k, theta, r)
                if k % record_stride == 0 or k == K:
                    states.append(TrajectoryState(k, theta.copy(), r.copy()))
    return states


def simulate_gained(
    spec: SystemSpec,
    pair: SchedulePair,
    gain,
    init,
    K: int,
    noise: NoiseStream,
    record_stride: int = 1,
) -> list[TrajectoryState]:
    """Run the recursion with a gain on the update direction.

    An n x n gain multiplies only the slow update; an (n+m) x (n+m) gain
    multiplies the stacked update and runs single-time-scale, with the fast
    block using the slow step size.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    gain = np.asarray(gain, dtype=np.float64)
    n, m = spec.n, spec.m
    if gain.shape == (n, n):
        slow_gain, full_gain = gain, None
    elif gain.shape == (n + m, n + m):
        slow_gain, full_gain = None, gain
    else:
        raise ValueError(f"gain must be {n}x{n} or {n + m}x{n + m}, got {gain.shape}")

    theta, r = _init_vectors(spec, init)
    betas = pair.slow.values(np.arange(K))
    gammas = betas if full_gain is not None else pair.fast.values(np.arange(K))

    states = [TrajectoryState(0, theta.copy(), r.copy())]
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for block in noise.blocks(K):
            for row in block:
                slow_dir = spec.b1 - spec.A11 @ theta - spec.A12 @ r + row[:n]
                fast_dir = spec.b2 - spec.A21 @ theta - spec.A22 @ r + row[n:]
                if full_gain is not None:
                    direction = full_gain @ np.concatenate([slow_dir, fast_dir])
                    theta_new = theta + betas[k] * direction[:n]
                    r_new = r + betas[k] * direction[n:]
                else:
                    theta_new = theta + betas[k] * (slow_gain @ slow_dir)
                    r_new = r + gammas[k] * fast_dir
                theta, r = theta_new, r_new
                k += 1
                _check_finite(k, theta, r)
                if k % record_stride == 0 or k == K:
                    states.append(TrajectoryState(k, theta.copy(), r.copy()))
    return states


# ---------------------------------------------------------------------------
# transformed (decoupled) trajectories


@dataclass(frozen=True)
class TransformedState:
    k: int
    theta_t: np.ndarray
    r_t: np.ndarray


@dataclass
class TransformedRun:
    k0: int
    states: list[TransformedState]
    lseq: LSequence


def simulate_transformed(
    spec: SystemSpec,
    pair: SchedulePair,
    K: int,
    noise: NoiseStream,
    k0: int = 0,
    init=None,
    record_stride: int = 1,
) -> TransformedRun:
    """Run the decoupled recursion in transformed coordinates.

    The original recursion runs (in centered coordinates) up to the start
    index of the decoupling sequence to provide the initial transformed
    state; from there the fast update has no slow coupling by construction
    and the slow noise feeds the fast block through the decoupling matrices.
    Reconstructing the original iterates from the result is exact algebra,
    so a shared noise stream makes this a runtime equivalence oracle for
    `simulate`.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    lseq = l_sequence(spec, pair, K, k0=k0)
    k0 = lseq.k0

    n = spec.n
    theta_star, r_star = fixed_point(spec)
    delta = delta_matrix(spec)
    A22_inv_A21 = np.linalg.solve(spec.A22, spec.A21)

    theta0, r0 = _init_vectors(spec, init)
    y = theta0 - theta_star  # slow deviation
    s = r0 - r_star  # fast deviation

    betas = pair.slow.values(np.arange(K))
    gammas = pair.fast.values(np.arange(K))

    draw_iter = _rows(noise, K)
    for k in range(k0):
        row = next(draw_iter)
        y_new = y + betas[k] * (-spec.A11 @ y - spec.A12 @ s + row[:n])
        s_new = s + gammas[k] * (-spec.A21 @ y - spec.A22 @ s + row[n:])
        y, s = y_new, s_new
        _check_finite(k + 1, y, s)

    theta_t = y.copy()
    r_t = lseq.at(k0) @ y + (s + A22_inv_A21 @ y)

    states = []

    def record(k):
        if (k % record_stride == 0 and k >= k0) or k in (k0, K):
            states.append(TransformedState(k, theta_t.copy(), r_t.copy()))

    record(k0)
    for k in range(k0, K):
        row = next(draw_iter)
        beta, gamma = betas[k], gammas[k]
        L_next = lseq.at(k + 1)
        B11 = delta - spec.A12 @ lseq.at(k)
        coupling = L_next + A22_inv_A21
        B22 = (beta / gamma) * (coupling @ spec.A12) + spec.A22
        theta_new = theta_t - beta * (B11 @ theta_t + spec.A12 @ r_t) + beta * row[:n]
        r_new = r_t - gamma * (B22 @ r_t) + gamma * row[n:] + beta * (coupling @ row[:n])
        theta_t, r_t = theta_new, r_new
        _check_finite(k + 1, theta_t, r_t)
        record(k + 1)
    return TransformedRun(k0=k0, states=states, lseq=lseq)


def _rows(noise: NoiseStream, K: int):
    for block in noise.blocks(K):
        yield from block


def reconstruct_original(spec: SystemSpec, run: TransformedRun) -> list[TrajectoryState]:
    """Invert the decoupling transform back to original coordinates."""
    theta_star, _ = fixed_point(spec)
    out = []
    for st in run.states:
        theta = st.theta_t + theta_star
        r_hat = st.r_t - run.lseq.at(st.k) @ st.theta_t
        r = r_hat + np.linalg.solve(spec.A22, spec.b2 - spec.A21 @ theta)
        out.append(TrajectoryState(st.k, theta, r))
    return out


# ---------------------------------------------------------------------------
# exact second-moment propagation


@dataclass(frozen=True)
class CovarianceCheckpoint:
    k: int
    beta: float
    gamma: float
    Sigma11: np.ndarray
    Sigma12: np.ndarray
    Sigma22: np.ndarray


def _step_maps(spec: SystemSpec, pair: SchedulePair, a: int, b: int):
    """Per-step update matrices M_k = I - D_k A and noise injections for k in [a, b)."""
    n, m = spec.n, spec.m
    d = n + m
    ks = np.arange(a, b)
    dvec = np.concatenate(
        [
            np.repeat(pair.slow.values(ks)[:, None], n, axis=1),
            np.repeat(pair.fast.values(ks)[:, None], m, axis=1),
        ],
        axis=1,
    )
    M = np.eye(d)[None, :, :] - dvec[:, :, None] * spec.block_matrix()[None, :, :]
    return dvec, M


def _compose_affine(Ks: np.ndarray, gs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Compose affine maps x -> K x + g, applying index 0 first."""
    while len(Ks) > 1:
        odd = len(Ks) % 2 == 1
        if odd:
            lastK, lastg = Ks[-1], gs[-1]
            Ks, gs = Ks[:-1], gs[:-1]
        K2 = np.matmul(Ks[1::2], Ks[0::2])
        g2 = np.matmul(Ks[1::2], gs[0::2][..., None])[..., 0] + gs[1::2]
        if odd:
            Ks = np.concatenate([K2, lastK[None]])
            gs = np.concatenate([g2, lastg[None]])
        else:
            Ks, gs = K2, g2
    return Ks[0], gs[0]


def propagate_covariance(
    spec: SystemSpec,
    pair: SchedulePair,
    C0,
    K: int,
    checkpoints,
) -> list[CovarianceCheckpoint]:
    """Propagate the exact second moment of the deviation from the fixed point.

    The recursion is C_{k+1} = (I - D_k A) C_k (I - D_k A)' + D_k Gamma D_k
    with D_k the diagonal of slow and fast step sizes.  Checkpoints report
    the moment in centered coordinates, scaled by the inverse step sizes.
    Steps are advanced by composing the vectorized per-step maps, which is
    associative, so the reduction runs in batched matrix products.
    """
    n, m = spec.n, spec.m
    d = n + m
    if C0 is None:
        C = np.zeros((d, d))
    else:
        C = symmetrize(np.asarray(C0, dtype=np.float64).reshape(d, d))
        scale = 1.0 + float(np.linalg.norm(C))
        if float(np.min(np.linalg.eigvalsh(C))) < -1e-10 * scale:
            raise NotPSD("initial second moment has a negative eigenvalue beyond tolerance")

    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 1 or cps[-1] > K:
        raise ValueError("checkpoints must be within [1, K]")

    Gj = spec.noise.joint()
    T = np.block(
        [[np.eye(n), np.zeros((n, m))], [np.linalg.solve(spec.A22, spec.A21), np.eye(m)]]
    )

    chunk = max(16, min(1 << 14, _PROPAGATE_CHUNK_BYTES // (d**4 * 8)))
    c = C.flatten()
    out = []
    prev = 0
    for cp in cps:
        for a in range(prev, cp, chunk):
            b = min(cp, a + chunk)
            dvec, M = _step_maps(spec, pair, a, b)
            L = b - a
            Ks = np.einsum("lab,lcd->lacbd", M, M).reshape(L, d * d, d * d)
            gs = (dvec[:, :, None] * Gj[None, :, :] * dvec[:, None, :]).reshape(L, d * d)
            Ktot, gtot = _compose_affine(Ks, gs)
            c = Ktot @ c + gtot
        prev = cp
        H = T @ symmetrize(c.reshape(d, d)) @ T.T
        beta = pair.slow.value(cp)
        gamma = pair.fast.value(cp)
        out.append(
            CovarianceCheckpoint(
                k=cp,
                beta=beta,
                gamma=gamma,
                Sigma11=H[:n, :n] / beta,
                Sigma12=H[:n, n:] / beta,
                Sigma22=H[n:, n:] / gamma,
            )
        )
    return out


# ---------------------------------------------------------------------------
# seeded parallel ensembles


@dataclass(frozen=True)
class CheckpointSamples:
    """Centered samples of every replica at one step index."""

    k: int
    beta: float
    gamma: float
    theta_hat: np.ndarray  # (N, n)
    r_hat: np.ndarray  # (N, m)


@dataclass
class EnsembleResult:
    base_seed: int
    replicas: int
    K: int
    checkpoints: list[CheckpointSamples]

    def at(self, k: int) -> CheckpointSamples:
        for cp in self.checkpoints:
            if cp.k == k:
                return cp
        raise KeyError(f"no checkpoint at k={k}")

    @property
    def final(self) -> CheckpointSamples:
        return self.checkpoints[-1]


def _segment_plan(spec: SystemSpec, pair: SchedulePair, F: np.ndarray, K: int, cps: list[int]):
    """Precompute per-segment transition and noise-weight matrices.

    Over a segment [a, b) the deviation updates compose to
    Z_b = Z_a P' + Zraw W, where Zraw holds the standardized draws of the
    segment flattened step-major and W stacks (R_j D_j F)' for the suffix
    products R_j of the step maps.  Segment boundaries sit at every noise
    tile edge and every checkpoint so recorded states are exact.
    """
    d = spec.n + spec.m
    block = noise_block_steps(d)
    bounds = sorted(set([0, K] + list(range(0, K, block)) + cps))
    segments = []
    # Unstable systems overflow the composed products to inf; that is the
    # intended divergence signal, resolved stepwise later, so no warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for a, b in zip(bounds[:-1], bounds[1:]):
            dvec, M = _step_maps(spec, pair, a, b)
            L = b - a
            W = np.empty((L * d, d))
            R = np.eye(d)
            for j in range(L - 1, -1, -1):
                W[j * d : (j + 1) * d, :] = ((R * dvec[j][None, :]) @ F).T
                R = R @ M[j]
            segments.append((a, b, R.T.copy(), W))  # R is now the full product P
    return segments


def _ensemble_worker(
    spec: SystemSpec,
    pair: SchedulePair,
    segments,
    z0: np.ndarray,
    base_seed: int,
    replicas: range,
    distribution: str,
    cp_store: dict[int, tuple[np.ndarray, np.ndarray]],
    A22_inv_A21_T: np.ndarray,
) -> None:
    n = spec.n
    d = spec.n + spec.m
    C = len(replicas)
    chunk_idx = replicas.start // NOISE_CHUNK
    reader = _ChunkNoise(base_seed, chunk_idx, C, d, distribution)
    Z = np.repeat(z0[None, :], C, axis=0)
    lo = replicas.start

    def store(k: int) -> None:
        if k in cp_store:
            th, rh = cp_store[k]
            th[lo : lo + C] = Z[:, :n]
            rh[lo : lo + C] = Z[:, n:] + Z[:, :n] @ A22_inv_A21_T

    store(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for a, b, Pt, W in segments:
            zraw = reader.segment(a, b)
            Z_prev = Z
            Z = Z @ Pt + zraw @ W
            peak = float(np.max(np.abs(Z)))
            if not np.isfinite(peak) or peak > DIVERGENCE_CUTOFF:
                _locate_divergence(spec, pair, Z_prev, zraw, a, b, replicas)
            store(b)


def _locate_divergence(spec, pair, Z_prev, zraw, a, b, replicas) -> None:
    """Replay a failing segment stepwise to report the first bad step and replicas."""
    d = spec.n + spec.m
    A = spec.block_matrix()
    F = factor_covariance(spec.noise.joint())
    U = zraw.reshape(len(Z_prev), b - a, d) @ F.T
    dvec, _ = _step_maps(spec, pair, a, b)
    Z = Z_prev.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(b - a):
            Z = Z - (Z @ A.T) * dvec[j][None, :] + U[:, j, :] * dvec[j][None, :]
            peaks = np.max(np.abs(Z), axis=1)
            bad = ~np.isfinite(peaks) | (peaks > DIVERGENCE_CUTOFF)
            if np.any(bad):
                raise Diverged(a + j + 1, replicas=[int(replicas[i]) for i in np.flatnonzero(bad)])
    raise Diverged(b, replicas=list(replicas))


def run_ensemble(
    spec: SystemSpec,
    pair: SchedulePair,
    N: int,
    K: int,
    checkpoints,
    base_seed: int,
    init=None,
    jobs: int = 1,
) -> EnsembleResult:
    """Simulate N independent replicas and sample centered iterates at checkpoints.

    Replica r draws from the stream keyed (base_seed, r); chunk layout is a
    fixed constant so any jobs value reproduces identical bits.  Samples are
    stored by replica index, making downstream statistics order-independent.
    """
    if N < 2:
        raise ValueError("ensemble needs at least 2 replicas")
    if K < 1:
        raise ValueError("K must be at least 1")
    cps = sorted(set(int(c) for c in checkpoints))
    if not cps or cps[0] < 0 or cps[-1] > K:
        raise ValueError("checkpoints must be within [0, K]")

    n, m = spec.n, spec.m
    theta_star, r_star = fixed_point(spec)
    theta0, r0 = _init_vectors(spec, init)
    z0 = np.concatenate([theta0 - theta_star, r0 - r_star])

    F = factor_covariance(spec.noise.joint())
    segments = _segment_plan(spec, pair, F, K, [c for c in cps if c > 0])
    A22_inv_A21_T = np.linalg.solve(spec.A22, spec.A21).T

    cp_store = {c: (np.empty((N, n)), np.empty((N, m))) for c in cps}
    chunks = [range(i, min(i + NOISE_CHUNK, N)) for i in range(0, N, NOISE_CHUNK)]

    def work(chunk: range) -> None:
        _ensemble_worker(
            spec,
            pair,
            segments,
            z0,
            base_seed,
            chunk,
            spec.noise.distribution,
            cp_store,
            A22_inv_A21_T,
        )

    if jobs <= 1 or len(chunks) == 1:
        for chunk in chunks:
            work(chunk)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, chunks))

    samples = [
        CheckpointSamples(
            k=c,
            beta=pair.slow.value(c),
            gamma=pair.fast.value(c),
            theta_hat=cp_store[c][0],
            r_hat=cp_store[c][1],
        )
        for c in cps
    ]
    return EnsembleResult(base_seed=base_seed, replicas=N, K=K, checkpoints=samples)


# ---------------------------------------------------------------------------
# CSV export


def format_float(x: float) -> str:
    """17 significant digits: exact round-trip for binary64."""
    return f"{float(x):.17g}"


def trajectory_csv_lines(spec: SystemSpec, states: list[TrajectoryState]) -> list[str]:
    header = (
        "k,"
        + ",".join(f"theta_{i}" for i in range(spec.n))
        + ","
        + ",".join(f"r_{j}" for j in range(spec.m))
    )
    lines = [header]
    for st in states:
        vals = [str(st.k)] + [format_float(v) for v in st.theta] + [format_float(v) for v in st.r]
        lines.append(",".join(vals))
    return lines
