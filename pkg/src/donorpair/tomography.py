"""Two-qubit nuclear state tomography: projection pulses, Stokes-parameter
estimation, linear-inversion density reconstruction, physical projection,
fidelity, concurrence and nonparametric bootstrap confidence intervals.

Conventions: qubit value 0 is spin up, so <Z> of a spin-down qubit is -1.
Probability tables are indexed by the qubit pair (q1, q2) -> 2*q1 + q2.
The module boundary is probabilities; shot sampling lives in the pulse
engine.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    ContractError,
    PAULIS,
    nearest_physical_density,
    psd_sqrt,
)

AXES = ("X", "Y", "Z")
AXIS_PAIRS = tuple((a, b) for a in AXES for b in AXES)
PAULI_LABELS = ("I", "X", "Y", "Z")

PSI_PLUS = np.array([0.0, 1.0, 1.0, 0.0]) / math.sqrt(2.0)

_SIGMA_YY = np.kron(PAULIS["Y"], PAULIS["Y"])


@dataclass
class ProbabilityTable:
    """Outcome probabilities P(q1, q2) for each of the nine axis pairs."""

    pairs: dict

    def __post_init__(self):
        for key, quartet in self.pairs.items():
            arr = np.asarray(quartet, dtype=float)
            if arr.shape != (4,):
                raise ContractError(f"axis pair {key}: expected four outcomes")
            if np.any(arr < -1e-9) or np.any(arr > 1 + 1e-9):
                raise ContractError(f"axis pair {key}: probabilities out of range")
            if abs(arr.sum() - 1.0) > 1e-9:
                raise ContractError(f"axis pair {key}: probabilities sum to {arr.sum()}")
            self.pairs[key] = arr

    def require_complete(self):
        missing = [p for p in AXIS_PAIRS if p not in self.pairs]
        if missing:
            raise ContractError(f"missing axis pairs: {missing}")

    def to_json(self) -> str:
        payload = {f"{a}{b}": list(map(float, v)) for (a, b), v in self.pairs.items()}
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProbabilityTable":
        payload = json.loads(text)
        pairs = {(k[0], k[1]): np.asarray(v, dtype=float) for k, v in payload.items()}
        return cls(pairs)


def mean_table(tables) -> ProbabilityTable:
    tables = list(tables)
    pairs = {}
    for key in tables[0].pairs:
        pairs[key] = np.mean([t.pairs[key] for t in tables], axis=0)
    return ProbabilityTable(pairs)


def table_from_state(rho4: np.ndarray) -> ProbabilityTable:
    """Exact outcome probabilities of a two-qubit state in all nine bases
    (the direct-measurement oracle for the linear-inversion round trip)."""
    rho4 = np.asarray(rho4, dtype=complex)
    half = 1 / math.sqrt(2.0)
    eigvecs = {
        "Z": (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
        "X": (np.array([half, half]), np.array([half, -half])),
        "Y": (np.array([half, 1j * half]), np.array([half, -1j * half])),
    }
    pairs = {}
    for a1, a2 in AXIS_PAIRS:
        quartet = np.zeros(4)
        for q1 in (0, 1):
            for q2 in (0, 1):
                proj = np.kron(eigvecs[a1][q1], eigvecs[a2][q2])
                quartet[2 * q1 + q2] = float(np.real(proj.conj() @ rho4 @ proj))
        pairs[(a1, a2)] = quartet
    return ProbabilityTable(pairs)


def stokes_from_probabilities(table: ProbabilityTable) -> np.ndarray:
    """16 Stokes parameters S[a, b], a, b in (I, X, Y, Z), from the signed
    outcome sums of the designated axis-pair tables (identity reads the Z
    table with the outcome sign dropped); S[I, I] is one by normalization."""
    table.require_complete()
    s = np.zeros((4, 4))
    for ia, a in enumerate(PAULI_LABELS):
        for ib, b in enumerate(PAULI_LABELS):
            axis1 = "Z" if a == "I" else a
            axis2 = "Z" if b == "I" else b
            quartet = table.pairs[(axis1, axis2)]
            total = 0.0
            for q1 in (0, 1):
                for q2 in (0, 1):
                    sign1 = 1.0 if (a == "I" or q1 == 0) else -1.0
                    sign2 = 1.0 if (b == "I" or q2 == 0) else -1.0
                    total += sign1 * sign2 * quartet[2 * q1 + q2]
            s[ia, ib] = total
    return s


def density_from_stokes(stokes: np.ndarray) -> np.ndarray:
    """Linear inversion rho = (1/4) sum_ab S_ab sigma_a (x) sigma_b.

    Hermitian with unit trace; not necessarily positive semidefinite.
    """
    stokes = np.asarray(stokes, dtype=float)
    if abs(stokes[0, 0] - 1.0) > 1e-9:
        raise ContractError("S[I, I] must equal one")
    rho = np.zeros((4, 4), dtype=complex)
    for ia, a in enumerate(PAULI_LABELS):
        for ib, b in enumerate(PAULI_LABELS):
            rho += stokes[ia, ib] * np.kron(PAULIS[a], PAULIS[b])
    return rho / 4.0


def stokes_of_density(rho4: np.ndarray) -> np.ndarray:
    """Direct S_ab = Tr[(sigma_a (x) sigma_b) rho] (test oracle)."""
    rho4 = np.asarray(rho4, dtype=complex)
    s = np.zeros((4, 4))
    for ia, a in enumerate(PAULI_LABELS):
        for ib, b in enumerate(PAULI_LABELS):
            s[ia, ib] = float(np.real(np.trace(np.kron(PAULIS[a], PAULIS[b]) @ rho4)))
    return s


def fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """State fidelity <psi| rho |psi> against a pure target."""
    rho = np.asarray(rho, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if rho.shape[0] != psi.shape[0]:
        raise ContractError("dimension mismatch between state and target")
    return float(np.real(psi.conj() @ rho @ psi))


def spin_flip(rho: np.ndarray) -> np.ndarray:
    """(sigma_y (x) sigma_y) conj(rho) (sigma_y (x) sigma_y), with the
    elementwise complex conjugate."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ContractError("spin flip is defined for two-qubit states")
    return _SIGMA_YY @ rho.conj() @ _SIGMA_YY


def concurrence(rho: np.ndarray, discriminant_tol: float = 1e-10) -> float:
    """Entanglement monotone max(0, l1 - l2 - l3 - l4) with l_i the ordered
    eigenvalues of R = sqrt(sqrt(rho) rho_tilde sqrt(rho)).

    Discriminants (eigenvalues under the square root) within the tolerance of
    zero are clipped before the root: the square root otherwise amplifies
    double-precision noise on rank-deficient states to the 1e-8 scale.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ContractError("concurrence is defined for two-qubit states")
    low = float(np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)))
    if low < -1e-3:
        raise ContractError(f"input violates positivity beyond rounding: {low:.2e}")
    if low < 0:
        # reconstructed matrices arrive with rounding-level negative
        # eigenvalues; project onto the physical set first
        rho = nearest_physical_density(rho)
    root = psd_sqrt(rho)
    inner = root @ spin_flip(rho) @ root
    disc = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    disc = np.where(disc < discriminant_tol, 0.0, disc)
    lam = np.sort(np.sqrt(disc))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def _statistic_fn(statistic, target):
    if callable(statistic):
        return statistic
    if statistic == "fidelity":
        return lambda rho: fidelity(rho, target)
    if statistic == "concurrence":
        return concurrence
    raise ContractError(f"unknown statistic {statistic!r}")


def bootstrap_ci(
    groups,
    n_resamples: int,
    statistic="fidelity",
    seed: int = 0,
    target: np.ndarray = PSI_PLUS,
):
    """Nonparametric bootstrap over measurement groups.

    Resamples the group list with replacement, reconstructs the physical
    state from the mean table of each resample, and returns the 2.5 and 97.5
    percentiles (linear interpolation) plus the resample statistics.
    """
    groups = list(groups)
    if len(groups) < 2:
        raise ContractError("bootstrap needs at least two groups")
    if n_resamples < 100:
        warnings.warn(f"{n_resamples} resamples is too few for stable percentiles")
    fn = _statistic_fn(statistic, target)
    stats = np.zeros(n_resamples)
    for k in range(n_resamples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        pick = rng.integers(0, len(groups), size=len(groups))
        tab = mean_table([groups[i] for i in pick])
        rho = nearest_physical_density(density_from_stokes(stokes_from_probabilities(tab)))
        stats[k] = fn(rho)
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi), stats


@dataclass
class DensityEstimate:
    """Reconstruction output: raw linear inversion, its physical projection,
    the derived fidelity/concurrence and bootstrap percentile intervals."""

    raw: np.ndarray
    physical: np.ndarray
    fidelity: float
    concurrence: float
    ci: dict = field(default_factory=dict)
    stokes: np.ndarray | None = None

    def to_json(self) -> str:
        payload = {
            "re": np.real(self.physical).tolist(),
            "im": np.imag(self.physical).tolist(),
            "fidelity": self.fidelity,
            "concurrence": self.concurrence,
            "ci": {
                "lo": self.ci.get("fidelity", (math.nan, math.nan))[0],
                "hi": self.ci.get("fidelity", (math.nan, math.nan))[1],
            },
            "ci_concurrence": {
                "lo": self.ci.get("concurrence", (math.nan, math.nan))[0],
                "hi": self.ci.get("concurrence", (math.nan, math.nan))[1],
            },
        }
        return json.dumps(payload, indent=2)


def sample_table(exact: ProbabilityTable, n_shots: int, rng) -> ProbabilityTable:
    """Finite-shot empirical table: multinomial per axis pair."""
    pairs = {}
    for key in AXIS_PAIRS:
        p = np.clip(exact.pairs[key], 0.0, None)
        counts = rng.multinomial(n_shots, p / p.sum())
        pairs[key] = counts / n_shots
    return ProbabilityTable(pairs)


def sequence_table(
    params,
    prep_steps,
    mode: str = "GATE_MODEL",
    noise=None,
    engine=None,
) -> ProbabilityTable:
    """Exact nine-basis outcome table of a preparation sequence.

    Appends the per-nucleus projection pulses and a joint Z readout to the
    preparation steps and collects the probability-level outcome
    distribution for every axis pair. Projection pulses are conditional
    nuclear gates, so initialization errors distort them faithfully.
    """
    from . import pulses  # deferred: tomography is importable standalone

    pairs = {}
    for a1, a2 in AXIS_PAIRS:
        steps = list(prep_steps)
        steps.append(pulses.ProjectStep("n1", a1))
        steps.append(pulses.ProjectStep("n2", a2))
        steps.append(pulses.MeasureStep(("n1", "n2")))
        res = pulses.run_sequence(
            steps, params, noise=noise, mode=mode, shots=0, engine=engine
        )
        quartet = np.zeros(4)
        for (o1, o2), prob in res.outcome_probabilities.items():
            q1, q2 = 1 - o1, 1 - o2  # outcome 1 = up = qubit 0
            quartet[2 * q1 + q2] = max(prob, 0.0)
        quartet = quartet / quartet.sum()
        pairs[(a1, a2)] = quartet
    return ProbabilityTable(pairs)


def tomography_pipeline(
    source,
    n_shots_per_axis: int = 0,
    n_groups: int = 5,
    n_resamples: int = 1000,
    seed: int = 0,
    target: np.ndarray = PSI_PLUS,
) -> DensityEstimate:
    """Probabilities -> Stokes -> raw density -> physical projection ->
    fidelity/concurrence with bootstrap confidence intervals.

    `source` is either a ProbabilityTable of exact outcome probabilities or a
    callable (axis_pair -> outcome quartet). With ``n_shots_per_axis == 0``
    the exact table is used directly (no randomness); otherwise `n_groups`
    empirical tables are sampled from counter-based per-group streams and
    averaged, mirroring the grouped acquisition used for error bars.
    """
    if isinstance(source, ProbabilityTable):
        exact = source
    else:
        exact = ProbabilityTable({pair: source(pair) for pair in AXIS_PAIRS})
    exact.require_complete()

    if n_shots_per_axis > 0:
        groups = [
            sample_table(
                exact, n_shots_per_axis, np.random.default_rng(np.random.SeedSequence([seed, g]))
            )
            for g in range(n_groups)
        ]
        pooled = mean_table(groups)
    else:
        groups = None
        pooled = exact

    stokes = stokes_from_probabilities(pooled)
    raw = density_from_stokes(stokes)
    physical = nearest_physical_density(raw)
    est = DensityEstimate(
        raw=raw,
        physical=physical,
        fidelity=fidelity(physical, target),
        concurrence=concurrence(physical),
        stokes=stokes,
    )
    if groups is not None:
        for name in ("fidelity", "concurrence"):
            lo, hi, _ = bootstrap_ci(
                groups, n_resamples, statistic=name, seed=seed, target=target
            )
            est.ci[name] = (lo, hi)
    return est
