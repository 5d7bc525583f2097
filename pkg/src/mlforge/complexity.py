"""Generation-complexity model: closed forms and Monte-Carlo simulation.

Models repeated sequence generation as a Markov chain of per-token success
steps with an absorbing failure state. Whole-sequence generation restarts the
entire chain on any failure; modular generation restarts only the failed
module. The closed forms give the expected number of generation attempts per
success in the uniform best case, and the simulator checks them empirically:
exponential growth in output length for the monolithic process, linear for
the modular one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TokenChainSpec:
    """A token chain: one success probability per output position."""

    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.probabilities) < 1:
            raise ValueError("chain needs at least one position")
        for p in self.probabilities:
            if not (0 < p <= 1):
                raise ValueError(f"per-position probability {p} outside (0, 1]")

    @property
    def length(self) -> int:
        return len(self.probabilities)

    @classmethod
    def uniform(cls, length: int, epsilon: float) -> "TokenChainSpec":
        return cls(tuple([epsilon] * length))


@dataclass(frozen=True)
class ModularChainSpec:
    """The same total output split into modules generated independently."""

    module_sizes: tuple[int, ...]
    epsilon: float

    def __post_init__(self):
        if not self.module_sizes or any(z < 1 for z in self.module_sizes):
            raise ValueError("every module needs at least one token")
        if not (0 < self.epsilon <= 1):
            raise ValueError(f"epsilon {self.epsilon} outside (0, 1]")

    @property
    def length(self) -> int:
        return sum(self.module_sizes)

    @property
    def max_module_size(self) -> int:
        return max(self.module_sizes)

    @classmethod
    def uniform(cls, length: int, module_size: int, epsilon: float) -> "ModularChainSpec":
        """Split ``length`` tokens into chunks of at most ``module_size``."""
        if not (1 <= module_size <= length):
            raise ValueError("module size must lie in [1, length]")
        full, rem = divmod(length, module_size)
        sizes = [module_size] * full + ([rem] if rem else [])
        return cls(tuple(sizes), epsilon)


@dataclass(frozen=True)
class SimulationResult:
    estimate: float
    trials: int
    standard_error: float
    closed_form: float
    aborted: bool = False


def success_probability(spec: TokenChainSpec) -> float:
    """Probability one attempt completes the whole chain."""
    prob = 1.0
    for p in spec.probabilities:
        prob *= p
    return prob


def token_level_complexity(spec: TokenChainSpec, epsilon_threshold: float) -> int:
    """Number of positions whose success probability falls below the threshold."""
    if not (0 < epsilon_threshold <= 1):
        raise ValueError("threshold must lie in (0, 1]")
    return sum(1 for p in spec.probabilities if p < epsilon_threshold)


def expected_generations_monolithic(epsilon: float, length: int) -> float:
    """Expected attempts when every attempt regenerates all ``length`` tokens."""
    if not (0 < epsilon <= 1):
        raise ValueError(f"epsilon {epsilon} outside (0, 1]")
    if length < 1:
        raise ValueError("length must be >= 1")
    return epsilon ** (-length)


def expected_generations_modular(epsilon: float, length: int, module_size: int) -> float:
    """Expected total attempts when modules of ``module_size`` tokens retry independently."""
    if not (0 < epsilon <= 1):
        raise ValueError(f"epsilon {epsilon} outside (0, 1]")
    if not (1 <= module_size <= length):
        raise ValueError("module size must lie in [1, length]")
    return math.ceil(length / module_size) * epsilon ** (-module_size)


def expected_generations_at_complexity(epsilon: float, hard_positions: int) -> float:
    """Sharper uniform-profile bound: only sub-threshold positions cost retries."""
    if not (0 < epsilon <= 1):
        raise ValueError(f"epsilon {epsilon} outside (0, 1]")
    if hard_positions < 0:
        raise ValueError("hard position count must be >= 0")
    return epsilon ** (-hard_positions)


def _simulate_chain_attempts(probabilities: Sequence[float], trials: int,
                             rng: np.random.Generator,
                             step_budget: float) -> tuple[np.ndarray, bool, float]:
    """Attempt counts per trial for one restart-on-failure chain.

    Returns (counts, aborted, steps_used). Vectorized: every loop iteration
    runs one fresh attempt for all still-unfinished trials.
    """
    probs = np.asarray(probabilities, dtype=float)
    counts = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    steps = 0.0
    aborted = False
    while active.size:
        draws = rng.random((active.size, probs.size))
        succeeded = (draws < probs).all(axis=1)
        counts[active] += 1
        steps += active.size * probs.size
        active = active[~succeeded]
        if steps > step_budget and active.size:
            aborted = True
            break
    return counts, aborted, steps


def simulate(spec: TokenChainSpec | ModularChainSpec, trials: int,
             rng: np.random.Generator, safety_bound: float = 1e8) -> SimulationResult:
    """Monte-Carlo estimate of expected attempts per success.

    Monolithic trials restart the full token chain on the first failed
    position; modular trials sum independent per-module waits. If the run
    would exceed ``safety_bound`` token steps it stops early and flags the
    partial estimate instead of spinning forever.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(spec, TokenChainSpec):
        counts, aborted, _ = _simulate_chain_attempts(
            spec.probabilities, trials, rng, safety_bound
        )
        closed = 1.0 / success_probability(spec)
    else:
        counts = np.zeros(trials, dtype=np.int64)
        aborted = False
        remaining = float(safety_bound)
        closed = 0.0
        for size in spec.module_sizes:
            module_counts, module_aborted, used = _simulate_chain_attempts(
                [spec.epsilon] * size, trials, rng, remaining
            )
            counts += module_counts
            remaining -= used
            closed += spec.epsilon ** (-size)
            if module_aborted:
                aborted = True
                break
    estimate = float(counts.mean())
    if trials > 1:
        stderr = float(counts.std(ddof=1) / math.sqrt(trials))
    else:
        stderr = 0.0
    return SimulationResult(
        estimate=estimate,
        trials=trials,
        standard_error=stderr,
        closed_form=closed,
        aborted=aborted,
    )


@dataclass(frozen=True)
class ScalingRow:
    length: int
    monolithic: float
    modular: float
    ratio: float
    monolithic_mc: float | None = None
    modular_mc: float | None = None
    monolithic_se: float | None = None
    modular_se: float | None = None


@dataclass(frozen=True)
class ScalingReport:
    epsilon: float
    module_size: int
    rows: tuple[ScalingRow, ...]
    monolithic_log_slope: float
    modular_slope: float

    def expected_log_slope(self) -> float:
        return -math.log(self.epsilon)

    def expected_modular_slope(self) -> float:
        return self.epsilon ** (-self.module_size) / self.module_size


def _fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    return float(slope)


def scaling_report(epsilon: float, lengths: Sequence[int], module_size: int,
                   trials: int | None = None,
                   rng: np.random.Generator | None = None) -> ScalingReport:
    """Closed-form scaling table over ascending lengths, optionally with MC columns."""
    lengths = list(lengths)
    if lengths != sorted(lengths) or len(set(lengths)) != len(lengths):
        raise ValueError("lengths must be strictly ascending")
    if any(length < module_size for length in lengths):
        raise ValueError("every length must be >= module size")
    rows: list[ScalingRow] = []
    for length in lengths:
        mono = expected_generations_monolithic(epsilon, length)
        modular = expected_generations_modular(epsilon, length, module_size)
        mono_mc = modular_mc = mono_se = modular_se = None
        if trials:
            if rng is None:
                raise ValueError("Monte-Carlo columns require an rng")
            mono_result = simulate(TokenChainSpec.uniform(length, epsilon), trials, rng)
            modular_result = simulate(
                ModularChainSpec.uniform(length, module_size, epsilon), trials, rng
            )
            mono_mc, mono_se = mono_result.estimate, mono_result.standard_error
            modular_mc, modular_se = modular_result.estimate, modular_result.standard_error
        rows.append(ScalingRow(
            length=length,
            monolithic=mono,
            modular=modular,
            ratio=mono / modular,
            monolithic_mc=mono_mc,
            modular_mc=modular_mc,
            monolithic_se=mono_se,
            modular_se=modular_se,
        ))
    log_slope = _fit_slope([r.length for r in rows],
                           [math.log(r.monolithic) for r in rows])
    modular_slope = _fit_slope([r.length for r in rows], [r.modular for r in rows])
    return ScalingReport(
        epsilon=epsilon,
        module_size=module_size,
        rows=tuple(rows),
        monolithic_log_slope=log_slope,
        modular_slope=modular_slope,
    )


def render_scaling_table(report: ScalingReport) -> str:
    """Tab-delimited text table with fixed 2-decimal formatting."""
    has_mc = any(r.monolithic_mc is not None for r in report.rows)
    header = ["length", "monolithic", "modular", "ratio"]
    if has_mc:
        header += ["monolithic_mc", "monolithic_se", "modular_mc", "modular_se"]
    lines = ["\t".join(header)]
    for row in report.rows:
        cells = [str(row.length), f"{row.monolithic:.2f}", f"{row.modular:.2f}",
                 f"{row.ratio:.2f}"]
        if has_mc:
            cells += [f"{row.monolithic_mc:.2f}", f"{row.monolithic_se:.4f}",
                      f"{row.modular_mc:.2f}", f"{row.modular_se:.4f}"]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
