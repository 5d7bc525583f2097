"""Task-model types: validation, sampling, history round-trips."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlforge.task import (
    CandidateMethod,
    CandidateNetwork,
    HyperparameterSpec,
    MetricSpec,
    ModuleStage,
    OptimizationHistory,
    OptimizationRecord,
    SearchSpace,
    Solution,
    TaskClassification,
    TaskDescription,
    count_pathways,
    default_finetune_space,
    infer_direction,
    load_task_file,
    sample_solution,
    solution_violations,
    validate_search_space,
)


def make_stage(kind: str, ids: list[str]) -> ModuleStage:
    return ModuleStage(kind=kind, candidates=tuple(
        CandidateMethod(id=cid, stage=kind) for cid in ids
    ))


def make_valid_space(deep: bool = False) -> SearchSpace:
    if deep:
        classification = TaskClassification("cv", "multi-class classification",
                                            "probability labels")
        hypers = default_finetune_space()
    else:
        classification = TaskClassification("tabular", "single-output regression")
        hypers = (
            HyperparameterSpec("ridge", "real", "linear", 0.0, 1.0),
            HyperparameterSpec("depth", "integer", "linear", 1, 8),
            HyperparameterSpec("kernel", "categorical", choices=("rbf", "poly")),
        )
    return SearchSpace(
        stages=(
            make_stage("data-preparation", ["dp-a", "dp-b"]),
            make_stage("modeling", ["m-a", "m-b", "m-c"]),
            make_stage("post-processing", ["pp-a"]),
        ),
        hyperparameters=hypers,
        classification=classification,
    )


class TestValidation:
    def test_valid_space_has_no_violations(self):
        assert validate_search_space(make_valid_space()) == []

    def test_deep_learning_default_space_is_valid(self):
        assert validate_search_space(make_valid_space(deep=True)) == []

    def test_empty_stage_named(self):
        space = make_valid_space()
        space = dataclasses.replace(space, stages=(
            space.stages[0],
            ModuleStage(kind="modeling", candidates=()),
            space.stages[2],
        ))
        violations = validate_search_space(space)
        assert any("modeling" in v and "no candidates" in v for v in violations)

    def test_log_scale_range_containing_zero(self):
        space = make_valid_space()
        bad = HyperparameterSpec("lr", "real", "log", 0.0, 1.0)
        space = dataclasses.replace(space, hyperparameters=(bad,))
        violations = validate_search_space(space)
        assert any("lr" in v and "log scale" in v for v in violations)

    @pytest.mark.parametrize("mutate", [
        "dup_stage", "dup_candidate", "reversed_bounds", "bad_category",
        "format_on_regression", "wrong_dl_hypers", "dup_hyper",
        "categorical_without_choices",
    ])
    def test_single_invariant_mutations_are_caught(self, mutate):
        space = make_valid_space(deep=(mutate == "wrong_dl_hypers"))
        if mutate == "dup_stage":
            space = dataclasses.replace(
                space, stages=space.stages + (make_stage("modeling", ["m-z"]),))
        elif mutate == "dup_candidate":
            space = dataclasses.replace(
                space, stages=(
                    make_stage("data-preparation", ["dp-a", "dp-a"]),
                ) + space.stages[1:])
        elif mutate == "reversed_bounds":
            space = dataclasses.replace(
                space, hyperparameters=(
                    HyperparameterSpec("ridge", "real", "linear", 1.0, 0.0),))
        elif mutate == "bad_category":
            space = dataclasses.replace(
                space, classification=TaskClassification("tabular", "clustering"))
        elif mutate == "format_on_regression":
            space = dataclasses.replace(
                space, classification=TaskClassification(
                    "tabular", "single-output regression", "integer labels"))
        elif mutate == "wrong_dl_hypers":
            space = dataclasses.replace(
                space, hyperparameters=space.hyperparameters[:-1])
        elif mutate == "dup_hyper":
            space = dataclasses.replace(
                space, hyperparameters=(
                    HyperparameterSpec("ridge", "real", "linear", 0.0, 1.0),
                    HyperparameterSpec("ridge", "real", "linear", 0.0, 1.0),
                ))
        elif mutate == "categorical_without_choices":
            space = dataclasses.replace(
                space, hyperparameters=(
                    HyperparameterSpec("kernel", "categorical"),))
        assert validate_search_space(space)


class TestSampling:
    def test_degenerate_space_yields_unique_solution(self):
        space = SearchSpace(
            stages=(make_stage("modeling", ["only"]),),
            hyperparameters=(HyperparameterSpec("c", "real", "linear", 0.5, 0.5000001),),
            classification=TaskClassification("tabular", "single-output regression"),
        )
        solution = sample_solution(space, np.random.default_rng(3))
        assert solution.choice("modeling") == "only"
        assert abs(solution.hyperparameter("c") - 0.5) < 1e-6

    def test_same_seed_same_solution(self):
        space = make_valid_space()
        a = sample_solution(space, np.random.default_rng(11))
        b = sample_solution(space, np.random.default_rng(11))
        assert a == b

    def test_log_sampling_median_near_log_midpoint(self):
        # Independent oracle: direct simulation of round(exp(U)) over
        # [ln 2, ln 64]; its median sits at log2(11) ~ 3.459, within 0.05 of
        # the continuous midpoint 3.5 minus the integer-rounding bias.
        spec = HyperparameterSpec("batch_size", "integer", "log", 2, 64)
        space = SearchSpace(
            stages=(make_stage("modeling", ["m"]),),
            hyperparameters=(spec,),
            classification=TaskClassification("tabular", "single-output regression"),
        )
        rng = np.random.default_rng(17)
        values = [
            sample_solution(space, rng).hyperparameter("batch_size")
            for _ in range(100_000)
        ]
        median = float(np.median(np.log2(values)))
        oracle_rng = np.random.default_rng(991)
        oracle = np.round(np.exp(oracle_rng.uniform(
            np.log(2), np.log(64), size=100_000)))
        oracle_median = float(np.median(np.log2(oracle)))
        # 3 sigma of the median statistic, estimated by replication.
        replicate_medians = [
            float(np.median(np.log2(np.round(np.exp(np.random.default_rng(s).uniform(
                np.log(2), np.log(64), size=100_000))))))
            for s in range(40, 60)
        ]
        sigma = max(float(np.std(replicate_medians)), 1e-3)
        assert abs(median - oracle_median) <= 3 * sigma
        assert abs(median - 3.5) <= 0.1

    @staticmethod
    def random_space(rng: np.random.Generator) -> SearchSpace:
        """A random valid tabular space: stages, candidates, mixed specs."""
        stages = tuple(
            make_stage(kind, [f"{kind}-{i}" for i in range(int(rng.integers(1, 5)))])
            for kind in ("data-preparation", "modeling", "post-processing")
        )
        hypers = []
        for i in range(int(rng.integers(0, 5))):
            kind = ("real", "integer", "categorical")[int(rng.integers(3))]
            if kind == "categorical":
                hypers.append(HyperparameterSpec(
                    f"h{i}", "categorical",
                    choices=tuple(f"c{j}" for j in range(int(rng.integers(1, 4))))))
                continue
            scale = "log" if rng.random() < 0.5 else "linear"
            low = float(rng.uniform(0.001, 10)) if scale == "log" \
                else float(rng.uniform(-10, 10))
            span = float(rng.uniform(0.5, 100))
            if kind == "integer":
                low = max(1.0, float(round(low))) if scale == "log" \
                    else float(round(low))
                span = max(span, 2.0)
            hypers.append(HyperparameterSpec(f"h{i}", kind, scale, low, low + span))
        return SearchSpace(
            stages=stages, hyperparameters=tuple(hypers),
            classification=TaskClassification("tabular", "single-output regression"),
        )

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_samples_respect_ranges_over_random_spaces(self, seed):
        rng = np.random.default_rng(seed)
        space = self.random_space(rng)
        assert validate_search_space(space) == []
        for _ in range(20):
            assert solution_violations(sample_solution(space, rng), space) == []

    def test_hundred_thousand_samples_respect_ranges(self):
        space = make_valid_space(deep=True)
        rng = np.random.default_rng(23)
        bad = sum(
            1 for _ in range(100_000)
            if solution_violations(sample_solution(space, rng), space)
        )
        assert bad == 0


class TestPathways:
    def test_product_of_verified_counts(self):
        network = CandidateNetwork(stages=(
            ("data-preparation", tuple(f"dp{i}" for i in range(20))),
            ("modeling", tuple(f"m{i}" for i in range(20))),
            ("post-processing", ("pp0",)),
        ))
        assert count_pathways(network) == 400

    def test_zero_when_any_stage_empty(self):
        network = CandidateNetwork(stages=(("modeling", ()), ("post", ("a",))))
        assert count_pathways(network) == 0

    def test_three_cubed(self):
        network = CandidateNetwork(stages=(
            ("a", ("1", "2", "3")), ("b", ("1", "2", "3")), ("c", ("1", "2", "3")),
        ))
        assert count_pathways(network) == 27


def record_strategy():
    solutions = st.builds(
        Solution,
        choices=st.just((("modeling", "m-a"),)),
        hyperparameters=st.tuples(st.tuples(
            st.just("ridge"), st.floats(0, 1, allow_nan=False))),
    )
    return st.one_of(
        st.builds(OptimizationRecord, solution=solutions,
                  budget=st.floats(0.01, 30, allow_nan=False),
                  wall_time=st.floats(0, 100, allow_nan=False),
                  status=st.just("evaluated"),
                  score=st.floats(-1e6, 1e6, allow_nan=False)),
        st.builds(OptimizationRecord, solution=solutions,
                  budget=st.floats(0.01, 30, allow_nan=False),
                  wall_time=st.floats(0, 100, allow_nan=False),
                  status=st.sampled_from(["pruned", "failed"]),
                  score=st.none()),
    )


class TestHistory:
    @given(records=st.lists(record_strategy(), max_size=25))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, records, tmp_path_factory):
        history = OptimizationHistory(records)
        path = tmp_path_factory.mktemp("hist") / "history.jsonl"
        history.save(path, meta={"config_digest": "abc", "seed": 1})
        loaded, meta = OptimizationHistory.load_with_meta(path)
        assert loaded == history
        assert meta["config_digest"] == "abc"

    def test_score_iff_evaluated(self):
        sol = Solution(choices=(("modeling", "m"),), hyperparameters=())
        with pytest.raises(ValueError):
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", None)
        with pytest.raises(ValueError):
            OptimizationRecord(sol, 1.0, 0.0, "pruned", 0.5)

    def test_best_respects_direction_and_ties(self):
        sol = Solution(choices=(("modeling", "m"),), hyperparameters=())
        records = [
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", 2.0),
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", 1.0),
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", 1.0),
        ]
        history = OptimizationHistory(records)
        best_max = history.best(MetricSpec("accuracy", "maximize"))
        assert best_max is records[0]
        best_min = history.best(MetricSpec("mae", "minimize"))
        assert best_min is records[1]  # earliest of the tied minima

    def test_pruned_never_wins(self):
        sol = Solution(choices=(("modeling", "m"),), hyperparameters=())
        history = OptimizationHistory([
            OptimizationRecord(sol, 1.0, 0.0, "pruned", None),
            OptimizationRecord(sol, 1.0, 0.0, "evaluated", 0.2),
        ])
        assert history.best(MetricSpec("accuracy", "maximize")).score == 0.2

    def test_corrupt_line_names_line_number(self, tmp_path):
        path = tmp_path / "history.jsonl"
        path.write_text('{"v": 1, "kind": "header"}\nnot json\n', encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            OptimizationHistory.load(path)


class TestTaskTypes:
    def test_direction_inference(self):
        assert infer_direction("top1-accuracy") == "maximize"
        assert infer_direction("mae") == "minimize"
        assert infer_direction("validation_loss") == "minimize"
        assert infer_direction("f1") == "maximize"

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            TaskDescription(text="  ", workspace=".",
                            metric=MetricSpec("mae", "minimize"))

    def test_output_format_invariant(self):
        cls = TaskClassification("nlp", "binary classification", "probability labels")
        assert cls.is_classification() and cls.is_deep_learning()

    def test_task_file_round_trip(self, tmp_path):
        workspace = tmp_path / "ws"
        workspace.mkdir()
        task_file = tmp_path / "task.yaml"
        task_file.write_text(
            "text: classify the things\n"
            "workspace: ws\n"
            "metric: {name: top1-accuracy}\n",
            encoding="utf-8",
        )
        task = load_task_file(task_file)
        assert task.metric.direction == "maximize"
        assert task.workspace == str(workspace.resolve())
