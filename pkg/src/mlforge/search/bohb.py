"""Multi-fidelity search: Hyperband bracket scheduling with a TPE-style
density-model proposer (the cited method's default hyperparameters).

Bracket ladder for max budget B and halving rate eta with s_max rungs:
bracket s starts ceil((s_max+1)/(s+1) * eta^s) configurations at budget
B / eta^s; after each rung the top ceil(n/eta) configurations advance to an
eta-times larger budget. Configuration proposals come from the density model
once enough observations exist at some budget, otherwise from random
sampling.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import truncnorm

from ..task import (
    HyperparameterSpec,
    MetricSpec,
    OptimizationHistory,
    SearchSpace,
    Solution,
)
from .ledger import Budget

# Density-model defaults of the cited BOHB method.
TOP_N_PERCENT = 15
NUM_CANDIDATES = 64
RANDOM_FRACTION = 1.0 / 3.0
BANDWIDTH_FACTOR = 3.0
MIN_BANDWIDTH = 1e-3


@dataclass(frozen=True)
class _Dim:
    name: str
    kind: str  # cat | num
    choices: tuple = ()
    low: float = 0.0
    high: float = 1.0
    scale: str = "linear"
    integer: bool = False


class SpaceEncoder:
    """Bijection between solutions and numeric vectors for the density model.

    Categorical dimensions (stage choices and categorical hyperparameters)
    encode as integer codes; numeric dimensions normalize to [0, 1], in log
    space when the spec says so.
    """

    def __init__(self, space: SearchSpace):
        self.space = space
        dims: list[_Dim] = []
        for stage in space.stages:
            dims.append(_Dim(
                name=f"stage:{stage.kind}", kind="cat",
                choices=tuple(c.id for c in stage.candidates),
            ))
        for spec in space.hyperparameters:
            if spec.kind == "categorical":
                dims.append(_Dim(name=spec.name, kind="cat", choices=spec.choices))
            else:
                dims.append(_Dim(
                    name=spec.name, kind="num", low=spec.low, high=spec.high,
                    scale=spec.scale, integer=spec.kind == "integer",
                ))
        self.dims = tuple(dims)
        self.var_type = "".join("u" if d.kind == "cat" else "c" for d in dims)

    def to_vector(self, solution: Solution) -> np.ndarray:
        values = []
        choices = dict(solution.choices)
        hypers = dict(solution.hyperparameters)
        for dim in self.dims:
            if dim.kind == "cat":
                raw = choices[dim.name.removeprefix("stage:")] \
                    if dim.name.startswith("stage:") else hypers[dim.name]
                values.append(float(dim.choices.index(raw)))
            else:
                value = float(hypers[dim.name])
                if dim.scale == "log":
                    unit = (math.log(value) - math.log(dim.low)) / (
                        math.log(dim.high) - math.log(dim.low))
                else:
                    unit = (value - dim.low) / (dim.high - dim.low)
                values.append(min(max(unit, 0.0), 1.0))
        return np.asarray(values, dtype=float)

    def from_vector(self, vector: Sequence[float]) -> Solution:
        choices: list[tuple[str, str]] = []
        hypers: list[tuple[str, object]] = []
        for dim, raw in zip(self.dims, vector):
            if dim.kind == "cat":
                index = int(min(max(round(raw), 0), len(dim.choices) - 1))
                value = dim.choices[index]
                if dim.name.startswith("stage:"):
                    choices.append((dim.name.removeprefix("stage:"), value))
                else:
                    hypers.append((dim.name, value))
            else:
                unit = float(min(max(raw, 0.0), 1.0))
                if dim.scale == "log":
                    value = math.exp(math.log(dim.low)
                                     + unit * (math.log(dim.high) - math.log(dim.low)))
                else:
                    value = dim.low + unit * (dim.high - dim.low)
                if dim.integer:
                    value = int(min(max(round(value), math.ceil(dim.low)),
                                    math.floor(dim.high)))
                else:
                    value = float(value)
                hypers.append((dim.name, value))
        return Solution(choices=tuple(choices), hyperparameters=tuple(hypers))


class DensitySampler:
    """Good/bad kernel-density proposer over encoded configurations."""

    def __init__(self, encoder: SpaceEncoder, rng: np.random.Generator,
                 min_points_in_model: int | None = None,
                 top_n_percent: int = TOP_N_PERCENT,
                 num_candidates: int = NUM_CANDIDATES,
                 random_fraction: float = RANDOM_FRACTION,
                 bandwidth_factor: float = BANDWIDTH_FACTOR,
                 min_bandwidth: float = MIN_BANDWIDTH):
        self.encoder = encoder
        self.rng = rng
        self.min_points = (min_points_in_model
                           if min_points_in_model is not None
                           else len(encoder.dims) + 1)
        self.top_n_percent = top_n_percent
        self.num_candidates = num_candidates
        self.random_fraction = random_fraction
        self.bandwidth_factor = bandwidth_factor
        self.min_bandwidth = min_bandwidth
        # budget -> list of (vector, loss)
        self._observations: dict[float, list[tuple[np.ndarray, float]]] = {}

    def observe(self, solution: Solution, budget: float, loss: float) -> None:
        self._observations.setdefault(budget, []).append(
            (self.encoder.to_vector(solution), float(loss))
        )

    def observation_count(self, budget: float) -> int:
        return len(self._observations.get(budget, []))

    def _model_budget(self) -> float | None:
        eligible = [b for b, obs in self._observations.items()
                    if len(obs) >= self.min_points + 2]
        return max(eligible) if eligible else None

    def _fit_kde(self, data: np.ndarray):
        from statsmodels.nonparametric.kernel_density import KDEMultivariate

        # A constant categorical column makes the unordered kernel emit NaN
        # densities with a RuntimeWarning; propose() discards those candidates.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return KDEMultivariate(data=data, var_type=self.encoder.var_type,
                                   bw="normal_reference")

    def propose(self) -> Solution | None:
        """Model-based proposal, or None when the caller should sample randomly."""
        if self.rng.random() < self.random_fraction:
            return None
        budget = self._model_budget()
        if budget is None:
            return None
        observations = sorted(self._observations[budget], key=lambda item: item[1])
        n = len(observations)
        n_good = max(self.min_points, math.ceil(self.top_n_percent / 100.0 * n))
        good = np.vstack([vec for vec, _ in observations[:n_good]])
        bad_rows = [vec for vec, _ in observations[n_good:]]
        if len(bad_rows) < self.min_points:
            return None
        bad = np.vstack(bad_rows)
        try:
            kde_good = self._fit_kde(good)
            kde_bad = self._fit_kde(bad)
        except (ValueError, np.linalg.LinAlgError):
            return None
        bandwidths = np.maximum(np.asarray(kde_good.bw, dtype=float),
                                self.min_bandwidth)
        best_vector: np.ndarray | None = None
        best_ratio = -math.inf
        for _ in range(self.num_candidates):
            datum = good[int(self.rng.integers(len(good)))]
            candidate = np.empty(len(self.encoder.dims))
            for idx, dim in enumerate(self.encoder.dims):
                bw = float(bandwidths[idx])
                if dim.kind == "cat":
                    keep = self.rng.random() >= min(bw, 0.99)
                    candidate[idx] = datum[idx] if keep \
                        else float(self.rng.integers(len(dim.choices)))
                else:
                    scale = max(bw * self.bandwidth_factor, self.min_bandwidth)
                    a = (0.0 - datum[idx]) / scale
                    b = (1.0 - datum[idx]) / scale
                    candidate[idx] = truncnorm.rvs(
                        a, b, loc=datum[idx], scale=scale, random_state=self.rng
                    )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                density_good = float(kde_good.pdf(candidate))
                density_bad = float(kde_bad.pdf(candidate))
            if not math.isfinite(density_good):
                continue
            ratio = density_good / max(density_bad, 1e-32)
            if ratio > best_ratio:
                best_ratio = ratio
                best_vector = candidate
        if best_vector is None:
            return None
        return self.encoder.from_vector(best_vector)


def bracket_sizes(s: int, s_max: int, eta: int) -> int:
    """Configurations started by bracket ``s``."""
    return math.ceil((s_max + 1) / (s + 1) * eta ** s)


def rung_budgets(s: int, eta: int, max_budget: float) -> list[float]:
    """Budget ladder of bracket ``s``: max_budget / eta^s ... max_budget."""
    return [max_budget / eta ** (s - i) for i in range(s + 1)]


def survivors_count(n: int, eta: int) -> int:
    return math.ceil(n / eta)


class BohbState:
    """Bracket scheduling plus the density sampler; one instance per run.

    Partial-budget scores are fed back through :meth:`observe` (history
    records deliberately withhold scores for pruned runs).
    """

    def __init__(self, space: SearchSpace, metric: MetricSpec,
                 max_budget: float = 30.0, eta: int = 3, s_max: int = 2,
                 budget_unit: str = "epochs",
                 rng: np.random.Generator | None = None,
                 sampler: DensitySampler | None = None):
        if eta < 2:
            raise ValueError("eta must be >= 2")
        self.space = space
        self.metric = metric
        self.max_budget = float(max_budget)
        self.eta = eta
        self.s_max = s_max
        self.budget_unit = budget_unit
        self.rng = rng if rng is not None else np.random.default_rng()
        self.encoder = SpaceEncoder(space)
        self.sampler = sampler if sampler is not None else DensitySampler(
            self.encoder, self.rng)
        self._bracket = s_max
        self._rung = 0
        self._members: list[tuple[Solution, str]] = []
        self._losses: dict[str, float] = {}
        self._pending: deque[Solution] = deque()
        self._open_bracket()

    def ladder(self) -> list[float]:
        """Budget ladder of the widest bracket."""
        return rung_budgets(self.s_max, self.eta, self.max_budget)

    def current_budget(self) -> float:
        return rung_budgets(self._bracket, self.eta, self.max_budget)[self._rung]

    def _propose(self) -> Solution:
        proposal = self.sampler.propose()
        if proposal is None:
            from ..task import sample_solution

            proposal = sample_solution(self.space, self.rng)
        return proposal

    def _open_bracket(self) -> None:
        n = bracket_sizes(self._bracket, self.s_max, self.eta)
        self._rung = 0
        self._members = []
        self._losses = {}
        for _ in range(n):
            solution = self._propose()
            self._members.append((solution, solution.key()))
            self._pending.append(solution)

    def _advance(self) -> None:
        """Close the finished rung: halve, or open the next bracket."""
        if self._rung < self._bracket:
            ranked = sorted(
                self._members,
                key=lambda item: self._losses.get(item[1], math.inf),
            )
            keep = survivors_count(len(ranked), self.eta)
            survivors = ranked[:keep]
            self._rung += 1
            self._members = survivors
            self._losses = {}
            for solution, _ in survivors:
                self._pending.append(solution)
        else:
            self._bracket = self._bracket - 1 if self._bracket > 0 else self.s_max
            self._open_bracket()

    def observe(self, solution: Solution, budget: float,
                score: float | None) -> None:
        """Feed one completed evaluation back (score None marks a failure)."""
        if score is None:
            loss = math.inf
        else:
            loss = -score if self.metric.direction == "maximize" else score
        self._losses[solution.key()] = loss
        if math.isfinite(loss):
            self.sampler.observe(solution, budget, loss)

    def next(self) -> tuple[Solution, Budget]:
        if not self._pending:
            self._advance()
            while not self._pending:  # degenerate single-member rungs
                self._advance()
        solution = self._pending.popleft()
        return solution, Budget(self.current_budget(), self.budget_unit)


def bohb_next(space: SearchSpace, history: OptimizationHistory,
              state: BohbState) -> tuple[Solution, Budget]:
    """Next (solution, budget) under bracket scheduling.

    ``history`` is the shared append-only record; the fidelity scores that
    drive halving arrive via ``state.observe`` because pruned records carry
    no score by contract.
    """
    assert state.space is space or state.space == space
    return state.next()
