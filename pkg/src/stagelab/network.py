"""Two-layer linear network trained by full-batch gradient descent.

The model is theta = W1 @ W2 with square factors.  The population loss on a
stage distribution is

    L(theta) = sum_i v_i * || (theta - A) V e_i ||^2

where A is the stage teacher matrix and v the per-coordinate input variances
in the shared basis.  Gradients flow through both factors, updates are
simultaneous, and an optional ridge term lambda * ||theta - anchor||_F^2
anchors the product to a reference checkpoint.

Balanced diagonal states (W1 = U sqrt(S), W2 = sqrt(S) V^T) stay balanced and
diagonal under these dynamics, which is what makes the per-coordinate scalar
recursions in derived_diag_step faithful companions of the matrix updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, StagelabError, TrainingDiverged
from .tasks import SpectralBasis, StageDistribution, target_matrix


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class NetworkState:
    """Immutable parameter pair; theta is always recomputed, never cached."""

    W1: np.ndarray
    W2: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "W1", _freeze(self.W1))
        object.__setattr__(self, "W2", _freeze(self.W2))
        n = self.W1.shape[0]
        if self.W1.shape != (n, n) or self.W2.shape != (n, n):
            raise ConfigError(
                f"factors must be square and equally sized, got {self.W1.shape} and {self.W2.shape}"
            )

    @property
    def n(self) -> int:
        return self.W1.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return self.W1 @ self.W2


def init_scaled_identity(n: int, tau: float, basis: SpectralBasis | None = None) -> NetworkState:
    """Balanced small init: aligned diagonal starts at exp(-2 tau) on every coordinate."""
    scale = math.exp(-tau)
    if basis is None or basis.is_identity:
        w = scale * np.eye(n)
        return NetworkState(W1=w, W2=w.copy())
    return NetworkState(W1=scale * basis.U, W2=scale * basis.V.T)


def init_from_spectrum(basis: SpectralBasis, spectrum: np.ndarray) -> NetworkState:
    """Balanced state whose aligned diagonal equals the given nonnegative spectrum."""
    spectrum = np.asarray(spectrum, dtype=float)
    if np.any(spectrum < 0):
        raise ConfigError("init_from_spectrum needs nonnegative entries")
    root = np.sqrt(spectrum)
    if basis.is_identity:
        return NetworkState(W1=np.diag(root), W2=np.diag(root))
    return NetworkState(W1=basis.U * root, W2=root[:, None] * basis.V.T)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one full-batch training run.

    Construction enforces the step-size budget 4 * eta * (ridge_lambda + 2) *
    gamma_bound < 1, where gamma_bound is the caller's bound on the squared
    operator norms involved; this is a configuration-time sanity check, actual
    instability is still caught at run time by the divergence guard.
    """

    eta: float
    max_steps: int
    ridge_lambda: float = 0.0
    ridge_anchor: np.ndarray | None = None
    stop_rule: str = "fixed_steps"
    plateau_threshold: float = 1e-9
    plateau_patience: int = 10
    gamma_bound: float = 2.0
    probe_every: int = 50

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.eta}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be nonnegative, got {self.max_steps}")
        if self.ridge_lambda < 0:
            raise ConfigError(f"ridge_lambda must be nonnegative, got {self.ridge_lambda}")
        if self.gamma_bound <= 0:
            raise ConfigError(f"gamma_bound must be positive, got {self.gamma_bound}")
        budget = 4.0 * self.eta * (self.ridge_lambda + 2.0) * self.gamma_bound
        if not budget < 1.0:
            raise ConfigError(
                "step-size budget violated: 4 * eta * (ridge_lambda + 2) * gamma_bound = "
                f"{budget:.6g} >= 1"
            )
        if self.ridge_lambda > 0 and self.ridge_anchor is None:
            raise ConfigError("ridge_lambda > 0 requires a ridge_anchor checkpoint")
        if self.stop_rule not in ("fixed_steps", "loss_plateau"):
            raise ConfigError(f"unknown stop_rule {self.stop_rule!r}")
        if self.plateau_threshold <= 0:
            raise ConfigError(f"plateau_threshold must be positive, got {self.plateau_threshold}")
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.probe_every < 1:
            raise ConfigError(f"probe_every must be >= 1, got {self.probe_every}")
        if self.ridge_anchor is not None:
            object.__setattr__(self, "ridge_anchor", _freeze(self.ridge_anchor))


@dataclass(frozen=True)
class Snapshot:
    step: int
    train_loss: float
    aligned_diag: np.ndarray | None
    aligned_offdiag: float | None
    probe_losses: Mapping[str, float]


@dataclass(frozen=True)
class Trajectory:
    """Ordered snapshots from one training run (always includes first and last state)."""

    snapshots: tuple[Snapshot, ...]

    @property
    def steps(self) -> np.ndarray:
        return np.array([s.step for s in self.snapshots], dtype=int)

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([s.train_loss for s in self.snapshots])

    def probe_losses(self, name: str) -> np.ndarray:
        if self.snapshots and name not in self.snapshots[0].probe_losses:
            known = ", ".join(sorted(self.snapshots[0].probe_losses)) or "none"
            raise StagelabError(f"no probe named '{name}' was recorded (have: {known})")
        return np.array([s.probe_losses[name] for s in self.snapshots])

    def diagonals(self) -> np.ndarray:
        """Stacked aligned diagonals, shape (num_snapshots, n)."""
        if self.snapshots and self.snapshots[0].aligned_diag is None:
            raise StagelabError("trajectory was recorded without aligned spectra")
        return np.stack([s.aligned_diag for s in self.snapshots])


def _data_gradient(E: np.ndarray, v: np.ndarray, V: np.ndarray | None) -> np.ndarray:
    """Gradient of the population loss with respect to theta, given E = theta - A."""
    if V is None:
        return 2.0 * (E * v)
    return 2.0 * ((E @ V) * v) @ V.T


def _data_loss(E: np.ndarray, v: np.ndarray, V: np.ndarray | None) -> float:
    if V is None:
        return float(np.sum(E * E * v))
    EV = E @ V
    return float(np.sum(EV * EV * v))


def population_loss(state: NetworkState, dist: StageDistribution, basis: SpectralBasis) -> float:
    """Exact expected squared error of theta on the stage distribution."""
    A = target_matrix(dist, basis)
    V = None if basis.is_identity else basis.V
    return _data_loss(state.theta - A, dist.input_variances, V)


def population_gradient(
    state: NetworkState,
    dist: StageDistribution,
    basis: SpectralBasis,
    ridge_lambda: float = 0.0,
    ridge_anchor: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients (dL/dW1, dL/dW2), including the optional ridge term."""
    A = target_matrix(dist, basis)
    V = None if basis.is_identity else basis.V
    theta = state.theta
    G = _data_gradient(theta - A, dist.input_variances, V)
    if ridge_lambda > 0:
        if ridge_anchor is None:
            raise ConfigError("ridge_lambda > 0 requires a ridge_anchor")
        G = G + 2.0 * ridge_lambda * (theta - ridge_anchor)
    return G @ state.W2.T, state.W1.T @ G


def gradient_step(
    state: NetworkState,
    dist: StageDistribution,
    basis: SpectralBasis,
    config: TrainConfig,
) -> NetworkState:
    """One simultaneous full-batch update of both factors."""
    G1, G2 = population_gradient(
        state, dist, basis, ridge_lambda=config.ridge_lambda, ridge_anchor=config.ridge_anchor
    )
    W1 = state.W1 - config.eta * G1
    W2 = state.W2 - config.eta * G2
    if not (np.isfinite(W1).all() and np.isfinite(W2).all()):
        raise TrainingDiverged(state.step + 1)
    return NetworkState(W1=W1, W2=W2, step=state.step + 1)


def aligned_spectrum(state: NetworkState, basis: SpectralBasis) -> tuple[np.ndarray, float]:
    """(diagonal of U^T theta V, Frobenius norm of the off-diagonal remainder)."""
    theta = state.theta
    M = theta if basis.is_identity else basis.U.T @ theta @ basis.V
    diag = np.diag(M).copy()
    off = M - np.diag(diag)
    return diag, float(np.linalg.norm(off))


def train(
    state: NetworkState,
    dist: StageDistribution,
    basis: SpectralBasis,
    config: TrainConfig,
    probes: Mapping[str, StageDistribution] | None = None,
    record_spectrum: bool = True,
) -> tuple[NetworkState, Trajectory]:
    """Run full-batch gradient descent, recording snapshots every probe_every steps.

    The first and final states are always snapshotted.  With stop_rule
    "loss_plateau" the run ends once the relative training-loss improvement
    between consecutive snapshots stays below plateau_threshold for
    plateau_patience snapshots in a row.
    """
    probes = dict(probes or {})
    A = target_matrix(dist, basis)
    v = dist.input_variances
    V = None if basis.is_identity else basis.V
    U = None if basis.is_identity else basis.U
    probe_mats = {name: (target_matrix(d, basis), d.input_variances) for name, d in probes.items()}
    lam = config.ridge_lambda
    anchor = config.ridge_anchor

    W1 = np.array(state.W1, copy=True)
    W2 = np.array(state.W2, copy=True)
    snaps: list[Snapshot] = []
    prev_loss: float | None = None
    flat_streak = 0
    step = 0
    stopped = False
    # overflow is caught by the finiteness check, so numpy's own warning about
    # it is noise on a run that is about to raise anyway
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            theta = W1 @ W2
            E = theta - A
            at_cadence = step % config.probe_every == 0
            final = step == config.max_steps
            if at_cadence or final:
                loss = _data_loss(E, v, V)
                if record_spectrum:
                    M = theta if U is None else U.T @ theta @ basis.V
                    diag = np.diag(M).copy()
                    offdiag = float(np.linalg.norm(M - np.diag(diag)))
                else:
                    diag, offdiag = None, None
                probe_losses = {
                    name: _data_loss(theta - pA, pv, V) for name, (pA, pv) in probe_mats.items()
                }
                snaps.append(
                    Snapshot(
                        step=step,
                        train_loss=loss,
                        aligned_diag=diag,
                        aligned_offdiag=offdiag,
                        probe_losses=probe_losses,
                    )
                )
                if config.stop_rule == "loss_plateau" and prev_loss is not None:
                    rel = (prev_loss - loss) / max(prev_loss, 1e-300)
                    flat_streak = flat_streak + 1 if rel < config.plateau_threshold else 0
                    if flat_streak >= config.plateau_patience:
                        stopped = True
                prev_loss = loss
            if final or stopped:
                break
            G = _data_gradient(E, v, V)
            if lam > 0:
                G = G + 2.0 * lam * (theta - anchor)
            G1 = G @ W2.T
            G2 = W1.T @ G
            W1 = W1 - config.eta * G1
            W2 = W2 - config.eta * G2
            step += 1
            if not (np.isfinite(W1).all() and np.isfinite(W2).all()):
                raise TrainingDiverged(state.step + step)

    final_state = NetworkState(W1=W1, W2=W2, step=state.step + step)
    return final_state, Trajectory(snapshots=tuple(snaps))


def idealized_diag_step(
    sigma: np.ndarray | float,
    target: np.ndarray | float,
    eta: float,
    ridge_lambda: float = 0.0,
    anchor: np.ndarray | float = 0.0,
) -> np.ndarray | float:
    """Textbook cubic per-coordinate recursion (kept verbatim for comparison).

    sigma' = sigma - 2 eta sigma (sigma^2 - target^2) + 2 eta ridge_lambda
    (sigma^2 - anchor^2).  Note this is not the gradient recursion of the
    anchored scalar objective; see derived_diag_step for the one that is.
    """
    return sigma - 2.0 * eta * sigma * (sigma**2 - target**2) + 2.0 * eta * ridge_lambda * (
        sigma**2 - anchor**2
    )


def derived_diag_step(
    sigma: np.ndarray | float,
    variance: np.ndarray | float,
    target: np.ndarray | float,
    eta: float,
    ridge_lambda: float = 0.0,
    anchor: np.ndarray | float = 0.0,
) -> np.ndarray | float:
    """Exact per-coordinate update for balanced diagonal states.

    With g = 2 (variance (sigma - target) + ridge_lambda (sigma - anchor)) both
    factors scale by (1 - eta g), so the product updates as sigma (1 - eta g)^2.
    This matches the matrix dynamics coordinate-by-coordinate.
    """
    g = 2.0 * (variance * (sigma - target) + ridge_lambda * (sigma - anchor))
    return sigma * (1.0 - eta * g) ** 2


def scalar_fixed_point(
    variance: float,
    target: float,
    eta: float,
    ridge_lambda: float = 0.0,
    anchor: float = 0.0,
    init: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 2_000_000,
) -> float:
    """Iterate derived_diag_step from init until the update falls below tol."""
    sigma = float(init)
    for i in range(max_iter):
        nxt = float(derived_diag_step(sigma, variance, target, eta, ridge_lambda, anchor))
        if not math.isfinite(nxt):
            raise TrainingDiverged(i + 1, f"scalar recursion diverged at iteration {i + 1}")
        if abs(nxt - sigma) <= tol:
            return nxt
        sigma = nxt
    raise StagelabError(f"scalar fixed point did not converge within {max_iter} iterations")


def stochastic_step(
    state: NetworkState,
    dist: StageDistribution,
    basis: SpectralBasis,
    config: TrainConfig,
    rng: np.random.Generator,
    batch_size: int,
    hidden_dropout: float = 0.0,
) -> NetworkState:
    """One minibatch update with optional per-sample masking of hidden units.

    Inputs are Gaussian with the stage covariance; targets come from the stage
    teacher.  With hidden_dropout = 0 the expected update equals the population
    gradient step.  Masked units are rescaled by 1 / (1 - hidden_dropout).
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if not 0.0 <= hidden_dropout < 1.0:
        raise ConfigError(f"hidden_dropout must lie in [0, 1), got {hidden_dropout}")
    n = state.n
    A = target_matrix(dist, basis)
    root_v = np.sqrt(dist.input_variances)
    Z = rng.standard_normal((n, batch_size))
    X = root_v[:, None] * Z if basis.is_identity else basis.V @ (root_v[:, None] * Z)
    Y = A @ X
    H = state.W2 @ X
    if hidden_dropout > 0.0:
        keep = 1.0 - hidden_dropout
        mask = (rng.random(H.shape) < keep) / keep
        H = H * mask
    else:
        mask = None
    E = state.W1 @ H - Y
    G1 = (2.0 / batch_size) * (E @ H.T)
    back = state.W1.T @ E
    if mask is not None:
        back = back * mask
    G2 = (2.0 / batch_size) * (back @ X.T)
    if config.ridge_lambda > 0:
        drift = 2.0 * config.ridge_lambda * (state.theta - config.ridge_anchor)
        G1 = G1 + drift @ state.W2.T
        G2 = G2 + state.W1.T @ drift
    W1 = state.W1 - config.eta * G1
    W2 = state.W2 - config.eta * G2
    if not (np.isfinite(W1).all() and np.isfinite(W2).all()):
        raise TrainingDiverged(state.step + 1)
    return NetworkState(W1=W1, W2=W2, step=state.step + 1)
