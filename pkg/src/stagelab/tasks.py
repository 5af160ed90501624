"""Spectral task families for staged training experiments.

A task family describes three stages of supervised data (pretrain, posttrain,
finetune) that share one pair of orthonormal bases (U, V).  Each stage is a
Gaussian input distribution plus a linear teacher: inputs have covariance
V diag(variances) V^T and targets come from a teacher matrix
U diag(target_spectrum) V^T.  The n feature coordinates are split into three
contiguous blocks:

* invariant     [0, n-2k):   same teacher singular value in every stage,
* inconsistent  [n-2k, n-k): teacher value changes across stages,
* specialized   [n-k, n):    only observed during posttraining (zero input
                             variance elsewhere).

Mixing two stage distributions mixes input variances and cross-covariances
linearly; the effective per-coordinate target is cross-covariance / variance,
which is what a quadratic learner actually regresses toward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, TaskValidationError

STAGES = ("pretrain", "posttrain", "finetune")

_SCHEMA_VERSION = 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeaturePartition:
    """Split of n feature coordinates into invariant/inconsistent/specialized blocks."""

    n: int
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"partition needs k >= 1, got k={self.k}")
        if self.n - 2 * self.k < 1:
            raise ConfigError(
                f"partition needs n - 2k >= 1 invariant coordinates, got n={self.n}, k={self.k}"
            )

    @property
    def d_invariant(self) -> int:
        return self.n - 2 * self.k

    @property
    def invariant(self) -> slice:
        return slice(0, self.n - 2 * self.k)

    @property
    def inconsistent(self) -> slice:
        return slice(self.n - 2 * self.k, self.n - self.k)

    @property
    def specialized(self) -> slice:
        return slice(self.n - self.k, self.n)


@dataclass(frozen=True)
class TaskSpectra:
    """Teacher singular values per block, plus the two scalars that shape them.

    specialized_target is the posttraining teacher value on specialized
    coordinates; mismatch_gap is the minimum separation the inconsistent block
    must keep between its posttrain value and its pretrain/finetune values.
    """

    invariant: np.ndarray
    pre_inconsistent: np.ndarray
    post_inconsistent: np.ndarray
    ft_inconsistent: np.ndarray
    specialized_target: float
    mismatch_gap: float

    def __post_init__(self) -> None:
        for name in ("invariant", "pre_inconsistent", "post_inconsistent", "ft_inconsistent"):
            object.__setattr__(self, name, _freeze(np.atleast_1d(getattr(self, name))))

    def validate(self, partition: FeaturePartition) -> None:
        """Raise TaskValidationError naming the first violated inequality."""
        if self.invariant.shape != (partition.d_invariant,):
            raise TaskValidationError(
                f"invariant spectrum has length {self.invariant.size}, partition wants {partition.d_invariant}"
            )
        for name in ("pre_inconsistent", "post_inconsistent", "ft_inconsistent"):
            vec = getattr(self, name)
            if vec.shape != (partition.k,):
                raise TaskValidationError(
                    f"{name} spectrum has length {vec.size}, partition wants k={partition.k}"
                )
        if self.mismatch_gap <= 0:
            raise TaskValidationError(f"mismatch_gap must be positive, got {self.mismatch_gap}")
        if self.specialized_target <= 0:
            raise TaskValidationError(
                f"specialized_target must be positive, got {self.specialized_target}"
            )
        if np.any(self.pre_inconsistent < 0) or np.any(self.ft_inconsistent < 0):
            raise TaskValidationError("inconsistent spectra must be nonnegative")

        pre_gap = float(np.min(self.post_inconsistent - self.pre_inconsistent))
        if pre_gap <= self.mismatch_gap:
            raise TaskValidationError(
                "inconsistent_post_pre_gap violated: "
                f"min(post - pre) = {pre_gap} <= mismatch_gap = {self.mismatch_gap}"
            )
        ft_gap = float(np.min(self.post_inconsistent - self.ft_inconsistent))
        if ft_gap <= self.mismatch_gap:
            raise TaskValidationError(
                "inconsistent_post_ft_gap violated: "
                f"min(post - ft) = {ft_gap} <= mismatch_gap = {self.mismatch_gap}"
            )
        if not self.specialized_target < self.mismatch_gap / 2:
            raise TaskValidationError(
                "specialized_magnitude violated: "
                f"specialized_target = {self.specialized_target} >= mismatch_gap/2 = {self.mismatch_gap / 2}"
            )
        ceiling = max(
            float(np.max(self.pre_inconsistent)),
            float(np.max(self.post_inconsistent)),
            self.specialized_target,
        )
        if not float(np.min(self.invariant)) > ceiling:
            raise TaskValidationError(
                "invariant_dominance violated: "
                f"min(invariant) = {float(np.min(self.invariant))} <= "
                f"max(inconsistent or specialized) = {ceiling}"
            )


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal output/input basis pair shared by every stage of a family."""

    U: np.ndarray
    V: np.ndarray
    mode: str = "identity"
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "U", _freeze(self.U))
        object.__setattr__(self, "V", _freeze(self.V))
        n = self.U.shape[0]
        if self.U.shape != (n, n) or self.V.shape != (n, n):
            raise ConfigError("basis matrices must be square and equally sized")
        for name, mat in (("U", self.U), ("V", self.V)):
            err = float(np.max(np.abs(mat.T @ mat - np.eye(n))))
            if err > 1e-10:
                raise ConfigError(f"basis {name} is not orthonormal (max |{name}^T {name} - I| = {err:.3e})")

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.mode == "identity"

    @classmethod
    def identity(cls, n: int) -> "SpectralBasis":
        eye = np.eye(n)
        return cls(U=eye, V=eye, mode="identity", seed=None)

    @classmethod
    def random(cls, n: int, seed: int) -> "SpectralBasis":
        """Haar-ish random orthonormal pair, deterministic in the seed."""
        rng = np.random.default_rng(seed)
        mats = []
        for _ in range(2):
            q, r = np.linalg.qr(rng.standard_normal((n, n)))
            q = q * np.sign(np.diag(r))  # fix the gauge so the draw is unique
            mats.append(q)
        return cls(U=mats[0], V=mats[1], mode="random", seed=seed)


@dataclass(frozen=True)
class StageDistribution:
    """One stage's data distribution in the shared spectral frame.

    input_variances and cross_covariance are the primitive quantities (they mix
    linearly); target_spectrum is derived as cross_covariance / variance with a
    zero placeholder on unobserved coordinates.
    """

    label: str
    input_variances: np.ndarray
    target_spectrum: np.ndarray
    cross_covariance: np.ndarray

    def __post_init__(self) -> None:
        for name in ("input_variances", "target_spectrum", "cross_covariance"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        v = self.input_variances
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigError(f"input variances must lie in [0, 1], got {v}")
        if self.target_spectrum.shape != v.shape or self.cross_covariance.shape != v.shape:
            raise ConfigError("distribution vectors must share one length")
        if np.any(self.target_spectrum < 0):
            raise ConfigError("target spectrum entries must be nonnegative")

    @property
    def n(self) -> int:
        return self.input_variances.size


def cross_covariance_spectrum(dist: StageDistribution) -> np.ndarray:
    """Per-coordinate input-target cross-covariance (variance * teacher value)."""
    return dist.cross_covariance.copy()


def target_matrix(dist: StageDistribution, basis: SpectralBasis) -> np.ndarray:
    """Teacher matrix U diag(target_spectrum) V^T."""
    if basis.is_identity:
        return np.diag(dist.target_spectrum)
    return (basis.U * dist.target_spectrum) @ basis.V.T


def input_covariance(dist: StageDistribution, basis: SpectralBasis) -> np.ndarray:
    """Input covariance V diag(input_variances) V^T."""
    if basis.is_identity:
        return np.diag(dist.input_variances)
    return (basis.V * dist.input_variances) @ basis.V.T


def mix_distributions(d1: StageDistribution, d2: StageDistribution, alpha: float) -> StageDistribution:
    """Convex mixture: draw from d2 with probability alpha, else from d1.

    Variances and cross-covariances mix linearly; effective targets are
    recomputed as cross-covariance / variance.  alpha = 0 or 1 returns the pure
    input unchanged, including bitwise-identical arrays.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"mixing weight must lie in [0, 1], got {alpha}")
    if d1.n != d2.n:
        raise ConfigError("cannot mix distributions of different dimension")
    if alpha == 0.0:
        return d1
    if alpha == 1.0:
        return d2
    v = (1.0 - alpha) * d1.input_variances + alpha * d2.input_variances
    xc = (1.0 - alpha) * d1.cross_covariance + alpha * d2.cross_covariance
    target = np.where(v > 0, xc / np.where(v > 0, v, 1.0), 0.0)
    return StageDistribution(
        label=f"mix({d1.label}, {d2.label}, {alpha:g})",
        input_variances=v,
        target_spectrum=target,
        cross_covariance=xc,
    )


@dataclass(frozen=True)
class TaskFamily:
    """A partition + spectra + basis bundle with one distribution per stage."""

    partition: FeaturePartition
    spectra: TaskSpectra
    basis: SpectralBasis
    distributions: Mapping[str, StageDistribution] = field(repr=False)

    @property
    def n(self) -> int:
        return self.partition.n

    def distribution(self, stage: str) -> StageDistribution:
        if stage not in self.distributions:
            raise ConfigError(f"unknown stage {stage!r}, expected one of {STAGES}")
        return self.distributions[stage]

    def target_matrix(self, dist_or_stage: StageDistribution | str) -> np.ndarray:
        """Teacher matrix U diag(target) V^T for a stage name or a distribution."""
        dist = dist_or_stage if isinstance(dist_or_stage, StageDistribution) else self.distribution(dist_or_stage)
        return target_matrix(dist, self.basis)

    def input_covariance(self, dist_or_stage: StageDistribution | str) -> np.ndarray:
        dist = dist_or_stage if isinstance(dist_or_stage, StageDistribution) else self.distribution(dist_or_stage)
        return input_covariance(dist, self.basis)

    def to_json(self) -> str:
        """Serialize the defining data (partition, spectra, basis mode + seed)."""
        doc = {
            "schema_version": _SCHEMA_VERSION,
            "partition": {"n": self.partition.n, "k": self.partition.k},
            "spectra": {
                "invariant": self.spectra.invariant.tolist(),
                "pre_inconsistent": self.spectra.pre_inconsistent.tolist(),
                "post_inconsistent": self.spectra.post_inconsistent.tolist(),
                "ft_inconsistent": self.spectra.ft_inconsistent.tolist(),
                "specialized_target": self.spectra.specialized_target,
                "mismatch_gap": self.spectra.mismatch_gap,
            },
            "basis": {"mode": self.basis.mode, "seed": self.basis.seed},
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TaskFamily":
        doc = json.loads(text)
        if doc.get("schema_version") != _SCHEMA_VERSION:
            raise ConfigError(f"unsupported task family schema_version {doc.get('schema_version')!r}")
        partition = FeaturePartition(n=int(doc["partition"]["n"]), k=int(doc["partition"]["k"]))
        sp = doc["spectra"]
        spectra = TaskSpectra(
            invariant=np.asarray(sp["invariant"], dtype=float),
            pre_inconsistent=np.asarray(sp["pre_inconsistent"], dtype=float),
            post_inconsistent=np.asarray(sp["post_inconsistent"], dtype=float),
            ft_inconsistent=np.asarray(sp["ft_inconsistent"], dtype=float),
            specialized_target=float(sp["specialized_target"]),
            mismatch_gap=float(sp["mismatch_gap"]),
        )
        mode = doc["basis"]["mode"]
        if mode == "identity":
            basis = SpectralBasis.identity(partition.n)
        elif mode == "random":
            basis = SpectralBasis.random(partition.n, seed=int(doc["basis"]["seed"]))
        else:
            raise ConfigError(f"unknown basis mode {mode!r}")
        return build_task_family(partition, spectra, basis=basis)


def _stage_distribution(partition: FeaturePartition, spectra: TaskSpectra, stage: str) -> StageDistribution:
    n = partition.n
    v = np.ones(n)
    t = np.zeros(n)
    t[partition.invariant] = spectra.invariant
    if stage == "pretrain":
        v[partition.specialized] = 0.0
        t[partition.inconsistent] = spectra.pre_inconsistent
    elif stage == "posttrain":
        t[partition.inconsistent] = spectra.post_inconsistent
        t[partition.specialized] = spectra.specialized_target
    elif stage == "finetune":
        v[partition.specialized] = 0.0
        t[partition.inconsistent] = spectra.ft_inconsistent
    else:
        raise ConfigError(f"unknown stage {stage!r}")
    return StageDistribution(
        label=stage,
        input_variances=v,
        target_spectrum=t,
        cross_covariance=v * t,
    )


def build_task_family(
    partition: FeaturePartition,
    spectra: TaskSpectra,
    basis: SpectralBasis | None = None,
    validate: bool = True,
) -> TaskFamily:
    """Assemble a TaskFamily, checking the block inequalities unless told not to."""
    if validate:
        spectra.validate(partition)
    if basis is None:
        basis = SpectralBasis.identity(partition.n)
    if basis.n != partition.n:
        raise ConfigError(f"basis dimension {basis.n} does not match partition n={partition.n}")
    dists = {stage: _stage_distribution(partition, spectra, stage) for stage in STAGES}
    return TaskFamily(partition=partition, spectra=spectra, basis=basis, distributions=dists)


def make_reference_family(basis_mode: str = "identity", basis_seed: int | None = None) -> TaskFamily:
    """The 6-coordinate reference family used throughout the tests and docs."""
    partition = FeaturePartition(n=6, k=2)
    spectra = TaskSpectra(
        invariant=np.array([5.0, 4.0]),
        pre_inconsistent=np.array([1.0, 0.8]),
        post_inconsistent=np.array([3.5, 3.3]),
        ft_inconsistent=np.array([0.5, 0.3]),
        specialized_target=0.9,
        mismatch_gap=2.0,
    )
    if basis_mode == "identity":
        basis = SpectralBasis.identity(partition.n)
    elif basis_mode == "random":
        basis = SpectralBasis.random(partition.n, seed=0 if basis_seed is None else basis_seed)
    else:
        raise ConfigError(f"unknown basis mode {basis_mode!r}")
    return build_task_family(partition, spectra, basis=basis)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    holds: bool
    margin: float | None
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    """Named structural checks on a spectra tuple, with signed margins."""

    entries: tuple[AssumptionCheck, ...]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            status = "holds" if e.holds else "FAILS"
            margin = "" if e.margin is None else f" (margin {e.margin:+.6g})"
            lines.append(f"{e.name}: {status}{margin} - {e.detail}")
        return "\n".join(lines)


def validate_assumptions(spectra: TaskSpectra, alpha: float) -> AssumptionReport:
    """Report which structural premises hold for these spectra at mixing weight alpha.

    Unlike TaskSpectra.validate this never raises; it is a diagnostic surface.
    The specialized_mixing_salience entry is expected to fail for every alpha
    whenever the magnitude inequalities hold, so it also reports a scan over a
    101-point alpha grid.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"mixing weight must lie in [0, 1], got {alpha}")
    entries: list[AssumptionCheck] = []

    entries.append(
        AssumptionCheck(
            name="shared_spectral_basis",
            holds=True,
            margin=None,
            detail="all stages share one (U, V) pair by construction",
        )
    )

    pre_gap = float(np.min(spectra.post_inconsistent - spectra.pre_inconsistent)) - spectra.mismatch_gap
    entries.append(
        AssumptionCheck(
            name="inconsistent_post_pre_gap",
            holds=pre_gap > 0,
            margin=pre_gap,
            detail="min(post - pre) must exceed mismatch_gap on the inconsistent block",
        )
    )
    ft_gap = float(np.min(spectra.post_inconsistent - spectra.ft_inconsistent)) - spectra.mismatch_gap
    entries.append(
        AssumptionCheck(
            name="inconsistent_post_ft_gap",
            holds=ft_gap > 0,
            margin=ft_gap,
            detail="min(post - ft) must exceed mismatch_gap on the inconsistent block",
        )
    )

    mag = spectra.mismatch_gap / 2 - spectra.specialized_target
    entries.append(
        AssumptionCheck(
            name="specialized_magnitude",
            holds=mag > 0,
            margin=mag,
            detail="specialized_target must stay below mismatch_gap / 2",
        )
    )

    ceiling = max(
        float(np.max(spectra.pre_inconsistent)),
        float(np.max(spectra.post_inconsistent)),
        spectra.specialized_target,
    )
    dom = float(np.min(spectra.invariant)) - ceiling
    entries.append(
        AssumptionCheck(
            name="invariant_dominance",
            holds=dom > 0,
            margin=dom,
            detail="invariant teacher values must dominate inconsistent and specialized ones",
        )
    )

    def salience_margin(a: float) -> float:
        rhs = (1.0 - a) * spectra.pre_inconsistent + a * spectra.post_inconsistent
        return float(np.min(a * spectra.specialized_target - rhs))

    margin_here = salience_margin(alpha)
    grid = np.linspace(0.0, 1.0, 101)
    holding = [float(a) for a in grid if salience_margin(float(a)) > 0]
    if holding:
        scan = f"holds for {len(holding)}/101 grid points (first at alpha={holding[0]:g})"
    else:
        scan = "fails for every alpha in a 101-point grid"
    entries.append(
        AssumptionCheck(
            name="specialized_mixing_salience",
            holds=margin_here > 0,
            margin=margin_here,
            detail=(
                "alpha * specialized_target must exceed the mixed inconsistent value; "
                + scan
            ),
        )
    )

    return AssumptionReport(entries=tuple(entries))
