"""Asymptotic scaled-covariance predictions and the decoupling sequence.

The limit covariances of the coupled recursion solve a triangular chain of
linear matrix equations.  Writing S11, S12, S22 for the scaled limits and
Delta for the reduced slow drift:

    A22 S22 + S22 A22'                                    = Gamma22
    A12 S22 + S12 A22'                                    = Gamma12
    Delta S11 + S11 Delta' - beta_bar S11 + A12 S21 + S12 A12' = Gamma11

The fast equation is a plain Lyapunov solve; the cross equation is linear
in S12 and solved directly; the slow equation is a Lyapunov solve for the
shifted drift Delta - beta_bar/2 I.  Eliminating S12 and S22 collapses the
chain to a single equation for S11 whose right-hand side is the covariance
Q of the effective slow noise V - A12 A22^{-1} W; solving that reduced
equation independently gives a second route to S11.

Gained variant: inserting a gain G on the slow update turns the effective
slow recursion, after the fast block equilibrates, into one with drift
G Delta and noise G (V - A12 A22^{-1} W), so its scaled covariance solves

    (G Delta) S + S (G Delta)' - beta_bar S = G Q G'.

Minimizing over G in the semidefinite order gives G = Delta^{-1} with value
Delta^{-1} Q Delta^{-T}, which also equals the slow block of the covariance
attained by the best full-block gain (the inverse of the whole coefficient
matrix) in the single-time-scale iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import AssumptionViolation, SingularDelta, SingularStep, SingularSystem
from .model import SystemSpec, delta_matrix
from .schedules import SchedulePair


@dataclass(frozen=True)
class CovariancePrediction:
    """Scaled limit covariance blocks plus the derived drift and noise terms."""

    Sigma11: np.ndarray
    Sigma12: np.ndarray
    Sigma22: np.ndarray
    Delta: np.ndarray
    Q: np.ndarray
    beta_bar: float

    def to_dict(self) -> dict:
        """Same structured-text shape as the input configuration matrices."""
        return {
            "Sigma11": self.Sigma11.tolist(),
            "Sigma12": self.Sigma12.tolist(),
            "Sigma22": self.Sigma22.tolist(),
            "Delta": self.Delta.tolist(),
            "Q": self.Q.tolist(),
            "beta_bar": self.beta_bar,
        }

    def equation_residuals(self, spec: SystemSpec) -> dict[str, float]:
        """Residual norms from substituting the blocks back into the chain."""
        S11, S12, S22 = self.Sigma11, self.Sigma12, self.Sigma22
        G = spec.noise
        r_fast = spec.A22 @ S22 + S22 @ spec.A22.T - G.Gamma22
        r_cross = spec.A12 @ S22 + S12 @ spec.A22.T - G.Gamma12
        r_slow = (
            self.Delta @ S11
            + S11 @ self.Delta.T
            - self.beta_bar * S11
            + spec.A12 @ S12.T
            + S12 @ spec.A12.T
            - G.Gamma11
        )
        return {
            "fast": float(np.linalg.norm(r_fast)),
            "cross": float(np.linalg.norm(r_cross)),
            "slow": float(np.linalg.norm(r_slow)),
        }


def noise_equivalent_covariance(spec: SystemSpec) -> np.ndarray:
    """Covariance Q of the effective slow noise V - A12 A22^{-1} W."""
    G = spec.noise
    C = np.linalg.solve(spec.A22.T, spec.A12.T).T  # A12 A22^{-1}
    Q = G.Gamma11 - C @ G.Gamma12.T - G.Gamma12 @ C.T + C @ G.Gamma22 @ C.T
    return linalg.symmetrize(Q)


def _check_predict_preconditions(spec: SystemSpec, beta_bar: float, delta: np.ndarray) -> None:
    failures = []
    if not linalg.is_hurwitz(-spec.A22):
        failures.append("fast-matrix-stable")
    if not linalg.is_hurwitz(-(delta - 0.5 * beta_bar * np.eye(spec.n))):
        failures.append("shifted-reduced-matrix-stable")
    if failures:
        raise AssumptionViolation(failures)


def predict_full(spec: SystemSpec, beta_bar: float) -> CovariancePrediction:
    """Solve the full chain of limit equations for all three blocks."""
    delta = delta_matrix(spec)
    _check_predict_preconditions(spec, beta_bar, delta)
    G = spec.noise

    S22 = linalg.solve_sylvester(spec.A22, spec.A22.T, G.Gamma22)
    S22 = linalg.symmetrize(S22)

    # Cross equation is one-sided in S12: S12 = (Gamma12 - A12 S22) A22^{-T}.
    S12 = np.linalg.solve(spec.A22, (G.Gamma12 - spec.A12 @ S22).T).T

    shifted = delta - 0.5 * beta_bar * np.eye(spec.n)
    rhs = G.Gamma11 - spec.A12 @ S12.T - S12 @ spec.A12.T
    S11 = linalg.solve_sylvester(shifted, shifted.T, linalg.symmetrize(rhs))
    S11 = linalg.symmetrize(S11)

    return CovariancePrediction(
        Sigma11=S11,
        Sigma12=S12,
        Sigma22=S22,
        Delta=delta,
        Q=noise_equivalent_covariance(spec),
        beta_bar=float(beta_bar),
    )


def predict_reduced(spec: SystemSpec, beta_bar: float) -> np.ndarray:
    """Solve the single reduced equation for the slow block only."""
    delta = delta_matrix(spec)
    _check_predict_preconditions(spec, beta_bar, delta)
    Q = noise_equivalent_covariance(spec)
    shifted = delta - 0.5 * beta_bar * np.eye(spec.n)
    return linalg.symmetrize(linalg.solve_sylvester(shifted, shifted.T, Q))


def gained_reduced_covariance(spec: SystemSpec, G1, beta_bar: float) -> np.ndarray:
    """Slow-block covariance under a slow-update gain G1.

    Solves (G1 Delta) S + S (G1 Delta)' - beta_bar S = G1 Q G1'; requires
    -(G1 Delta - beta_bar/2 I) Hurwitz for a unique stable solution.
    """
    G1 = linalg.as_matrix(G1, "G1")
    delta = delta_matrix(spec)
    if G1.shape != delta.shape:
        raise ValueError(f"gain shape {G1.shape} does not match slow dimension {delta.shape}")
    drift = G1 @ delta - 0.5 * beta_bar * np.eye(spec.n)
    if not linalg.is_hurwitz(-drift):
        raise AssumptionViolation(["gained-reduced-matrix-stable"])
    Q = noise_equivalent_covariance(spec)
    return linalg.symmetrize(linalg.solve_sylvester(drift, drift.T, G1 @ Q @ G1.T))


def optimal_gain_covariance(
    spec: SystemSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best achievable slow covariance and the gains attaining it.

    Returns (Sigma11_opt, G1_opt, G_opt): the slow-gain optimum
    Delta^{-1} Q Delta^{-T}, the slow gain Delta^{-1}, and the full-block
    gain equal to the inverse coefficient matrix.
    """
    delta = delta_matrix(spec)
    try:
        G1_opt = np.linalg.inv(delta)
    except np.linalg.LinAlgError as exc:
        raise SingularDelta(str(exc)) from exc
    if np.linalg.cond(delta) > 1e12:
        raise SingularDelta("reduced drift condition number exceeds 1e12")
    A = spec.block_matrix()
    if np.linalg.cond(A) > 1e12:
        raise SingularSystem("block matrix condition number exceeds 1e12")
    try:
        G_opt = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    Q = noise_equivalent_covariance(spec)
    Sigma11_opt = linalg.symmetrize(G1_opt @ Q @ G1_opt.T)
    return Sigma11_opt, G1_opt, G_opt


def matrix_csv_lines(matrices: dict[str, np.ndarray]) -> list[str]:
    """Serialize named matrices as (matrix, row, col, value) CSV rows.

    Values carry 17 significant digits so parsing the text back reproduces
    the binary64 entries exactly.
    """
    lines = ["matrix,row,col,value"]
    for name, M in matrices.items():
        M = np.atleast_2d(np.asarray(M, dtype=np.float64))
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                lines.append(f"{name},{i},{j},{M[i, j]:.17g}")
    return lines


def parse_matrix_csv(lines) -> dict[str, np.ndarray]:
    """Inverse of matrix_csv_lines."""
    entries: dict[str, dict[tuple[int, int], float]] = {}
    rows = [ln.strip() for ln in lines if ln.strip()]
    if rows and rows[0].lower().startswith("matrix,"):
        rows = rows[1:]
    for ln in rows:
        name, i, j, value = ln.split(",")
        entries.setdefault(name, {})[(int(i), int(j))] = float(value)
    out = {}
    for name, cells in entries.items():
        rows_n = 1 + max(i for i, _ in cells)
        cols_n = 1 + max(j for _, j in cells)
        M = np.zeros((rows_n, cols_n))
        for (i, j), v in cells.items():
            M[i, j] = v
        out[name] = M
    return out


@dataclass
class LSequence:
    """Decoupling matrices L_k with start index k0; zero for k below k0."""

    k0: int
    values: np.ndarray  # (K - k0 + 1, m, n), entry j is L_{k0 + j}
    norms: np.ndarray  # Frobenius norms per step

    @property
    def K(self) -> int:
        return self.k0 + len(self.values) - 1

    def at(self, k: int) -> np.ndarray:
        """L_k, with L_k = 0 for every k below the start index."""
        if k < self.k0:
            return np.zeros_like(self.values[0])
        if k > self.K:
            raise IndexError(f"k={k} beyond computed range {self.K}")
        return self.values[k - self.k0]

    @property
    def final_norm(self) -> float:
        return float(self.norms[-1])


def l_sequence(
    spec: SystemSpec,
    pair: SchedulePair,
    K: int,
    k0: int = 0,
    retry: bool = True,
    max_k0: int = 1024,
) -> LSequence:
    """Run the decoupling recursion from L_{k0} = 0 up to L_K.

    Each step solves L_{k+1} (I - beta_k B11_k) = L_k - gamma_k A22 L_k
    + beta_k A22^{-1} A21 B11_k with B11_k = Delta - A12 L_k.  A numerically
    singular step factor means k0 is too small; with retry enabled the start
    index doubles (0, 1, 2, 4, ...) up to max_k0 before giving up.
    """
    if K < k0:
        raise ValueError(f"K={K} must be at least k0={k0}")
    start = k0
    while True:
        try:
            return _l_sequence_run(spec, pair, K, start)
        except SingularStep:
            if not retry or start >= max_k0:
                raise
            start = 1 if start == 0 else 2 * start


def _l_sequence_run(spec: SystemSpec, pair: SchedulePair, K: int, k0: int) -> LSequence:
    n, m = spec.n, spec.m
    delta = delta_matrix(spec)
    A22_inv_A21 = np.linalg.solve(spec.A22, spec.A21)
    eye_n = np.eye(n)

    steps = K - k0
    betas = pair.slow.values(np.arange(k0, K))
    gammas = pair.fast.values(np.arange(k0, K))

    values = np.empty((steps + 1, m, n))
    norms = np.empty(steps + 1)
    L = np.zeros((m, n))
    values[0] = L
    norms[0] = 0.0
    for j in range(steps):
        beta, gamma = betas[j], gammas[j]
        B11 = delta - spec.A12 @ L
        factor = eye_n - beta * B11
        rhs = L - gamma * (spec.A22 @ L) + beta * (A22_inv_A21 @ B11)
        try:
            L = np.linalg.solve(factor.T, rhs.T).T
        except np.linalg.LinAlgError as exc:
            raise SingularStep(k0 + j) from exc
        norm = float(np.linalg.norm(L))
        # A near-singular step factor shows up as amplification of L, which
        # the decoupling recursion otherwise keeps below order one.
        if not np.isfinite(norm) or norm > 1e6:
            raise SingularStep(k0 + j)
        values[j + 1] = L
        norms[j + 1] = norm
    return LSequence(k0=k0, values=values, norms=norms)
