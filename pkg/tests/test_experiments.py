import pytest
import torch

from bido.models.enums import FusionMethodEnum, ModelVariantEnum
from bido.schemas.config import CliConfig
from bido.schemas.corpus import JunkInsertion, StringEncryptionSim
from bido.services.experiments import (
    ABLATION_VARIANTS,
    CLEAN_SCENARIO,
    LAB_SCENARIO,
    PRACTICAL_EVEN_SCENARIO,
    PRACTICAL_LIGHT_SCENARIO,
    ROBUSTNESS_SCENARIOS,
    ROBUSTNESS_VARIANTS,
    ExperimentServices,
)
from bido.services.training import TrainingServices
from bido.utils.errors import ConfigError

SEEDS = (0, 1, 2)


class TestExperimentHarness:
    def test_compare_fusion_rows(self, small_config):
        report = ExperimentServices.compare_fusion(small_config, [0])
        assert report.experiment == "compare_fusion"
        assert [row.name for row in report.rows] == ["ops", "summation", "concatenation"]
        for row in report.rows:
            assert len(row.runs) == 1
            assert 0.0 <= row.mean_f1 <= 1.0

    def test_sweep_k_token_counts(self, small_config):
        report = ExperimentServices.sweep_k(small_config, [1, 3], [0])
        assert [(row.name, row.token_count) for row in report.rows] == [("1", 2), ("3", 4)]

    def test_ablation_covers_every_variant(self, small_config):
        report = ExperimentServices.ablation(small_config, [0])
        assert [row.name for row in report.rows] == [v.value for v in ABLATION_VARIANTS]

    def test_robustness_rows(self, small_config):
        report = ExperimentServices.robustness(
            small_config, [0], [JunkInsertion(rate=0.5), StringEncryptionSim()]
        )
        assert report.transforms == ["junk:0.5", "encrypt:90"]
        assert len(report.rows) == len(ROBUSTNESS_VARIANTS) * len(ROBUSTNESS_SCENARIOS)
        row = report.row(ModelVariantEnum.DEX_ONLY.value, PRACTICAL_EVEN_SCENARIO)
        assert row.drop == pytest.approx(row.clean_f1 - row.obfuscated_f1)

    def test_robustness_subset_of_scenarios(self, small_config):
        report = ExperimentServices.robustness(small_config, [0], [JunkInsertion()], [LAB_SCENARIO])
        assert {row.scenario for row in report.rows} == {LAB_SCENARIO}

    def test_unknown_scenario(self, small_config):
        with pytest.raises(ConfigError):
            ExperimentServices.robustness(small_config, [0], [JunkInsertion()], ["field"])

    def test_scenario_splits(self):
        n = 100
        split = TrainingServices.split(n, seed=0)
        splits = ExperimentServices.scenario_splits(split, n, seed=0)
        assert set(splits) == set(ROBUSTNESS_SCENARIOS)
        assert splits[CLEAN_SCENARIO].train == split.train

        lab = splits[LAB_SCENARIO]
        assert lab.train == [n + i for i in split.train]
        assert lab.val == [n + i for i in split.val]

        light = splits[PRACTICAL_LIGHT_SCENARIO].train
        assert sum(i < n for i in light) == 80 and sum(i >= n for i in light) == 10

        even = splits[PRACTICAL_EVEN_SCENARIO].train
        assert sum(i < n for i in even) == 45 and sum(i >= n for i in even) == 45
        assert sorted(i % n for i in even) == sorted(split.train + split.val)

        held_out = set(split.test) | {n + i for i in split.test}
        for scenario in splits.values():
            assert held_out.isdisjoint(scenario.train + scenario.val)

    def test_drift_rows(self, small_config):
        report = ExperimentServices.drift(small_config, [0], [0.0, 2.5], test_size=4)
        assert [row.name for row in report.rows] == ["t=0", "t=2.5"]
        assert all(row.runs[0].metrics.total == 4 for row in report.rows)

    def test_arm_override_is_applied(self, small_config):
        dataset = ExperimentServices.corpus_dataset(small_config, seed=0)
        run = ExperimentServices.train_and_test(
            small_config, dataset, 0, fusion=FusionMethodEnum.CONCATENATION
        )
        assert run.seed == 0
        assert run.metrics.total == len(TrainingServices.split(len(dataset), 0).test)


@pytest.fixture(scope="module")
def desk_config() -> CliConfig:
    return CliConfig(preset="desk", epochs=20, corpus_n=1000, seed=0)


@pytest.mark.slow
class TestAcceptance:
    def test_end_to_end_desk_run(self, desk_config):
        dataset = ExperimentServices.corpus_dataset(desk_config, seed=0)
        first = TrainingServices.train(dataset, desk_config.train_config())
        assert first.summary.test.f1_or_zero >= 0.95

        second = TrainingServices.train(dataset, desk_config.train_config())
        assert [r.loss for r in first.history] == [r.loss for r in second.history]
        second_state = second.model.state_dict()
        for name, tensor in first.model.state_dict().items():
            assert torch.equal(tensor, second_state[name])

    def test_ablation_ordering(self, desk_config):
        report = ExperimentServices.ablation(desk_config, SEEDS)
        full = report.row(ModelVariantEnum.FULL.value).mean_f1
        dex_only = report.row(ModelVariantEnum.DEX_ONLY.value).mean_f1
        xml_only = report.row(ModelVariantEnum.XML_ONLY.value).mean_f1
        assert full > dex_only > xml_only

    def test_obfuscation_hurts_the_fused_model_less(self, desk_config):
        report = ExperimentServices.robustness(
            desk_config, SEEDS, [JunkInsertion(rate=1.0), StringEncryptionSim()], [CLEAN_SCENARIO]
        )
        full = report.row(ModelVariantEnum.FULL.value, CLEAN_SCENARIO)
        dex_only = report.row(ModelVariantEnum.DEX_ONLY.value, CLEAN_SCENARIO)
        assert full.drop <= dex_only.drop

    def test_ops_beats_summation(self, desk_config):
        report = ExperimentServices.compare_fusion(
            desk_config, SEEDS, [FusionMethodEnum.OPS, FusionMethodEnum.SUMMATION]
        )
        assert report.row("ops").mean_f1 >= report.row("summation").mean_f1
