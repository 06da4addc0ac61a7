from typing import Dict, List, Sequence

import numpy as np
from torch.utils.data import Subset

from bido.models.enums import FusionMethodEnum, ModelVariantEnum
from bido.schemas.config import CliConfig
from bido.schemas.corpus import ObfuscationTransform, describe_transform
from bido.schemas.report import (
    ExperimentReportSchema,
    ExperimentRowSchema,
    RobustnessReportSchema,
    RobustnessRowSchema,
    RunResultSchema,
)
from bido.services.analytics import AnalyticsServices
from bido.services.corpus import CorpusServices
from bido.services.training import SplitIndices, TrainingServices
from bido.utils.dataset import CorpusDataset
from bido.utils.errors import ConfigError
from bido.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_FUSIONS = (FusionMethodEnum.OPS, FusionMethodEnum.SUMMATION, FusionMethodEnum.CONCATENATION)
ABLATION_VARIANTS = (ModelVariantEnum.FULL, ModelVariantEnum.DEX_ONLY, ModelVariantEnum.XML_ONLY)
ROBUSTNESS_VARIANTS = (ModelVariantEnum.FULL, ModelVariantEnum.DEX_ONLY)
CLEAN_SCENARIO = "clean"
LAB_SCENARIO = "lab"
PRACTICAL_LIGHT_SCENARIO = "practical_80_10"
PRACTICAL_EVEN_SCENARIO = "practical_45_45"
ROBUSTNESS_SCENARIOS = (
    CLEAN_SCENARIO,
    LAB_SCENARIO,
    PRACTICAL_LIGHT_SCENARIO,
    PRACTICAL_EVEN_SCENARIO,
)


def _row(name: str, runs: List[RunResultSchema], **extra) -> ExperimentRowSchema:
    mean_f1 = float(np.mean([run.metrics.f1_or_zero for run in runs]))
    logger.info(f"{name}: mean F1 {mean_f1:.4f} over {len(runs)} runs")
    return ExperimentRowSchema(name=name, runs=runs, mean_f1=mean_f1, **extra)


class ExperimentServices:
    """Comparative studies on the synthetic corpus; every arm shares corpus and split per seed."""

    @staticmethod
    def corpus_dataset(config: CliConfig, seed: int, drift: float = 0.0) -> CorpusDataset:
        corpus_config = config.corpus_config().model_copy(update={"seed": seed, "drift": drift})
        corpus = CorpusServices.generate_samples(corpus_config)
        return CorpusDataset.from_pairs(
            corpus.clean, corpus_config.dex_geometry, corpus_config.xml_geometry
        )

    @staticmethod
    def train_and_test(
        config: CliConfig, dataset: CorpusDataset, seed: int, **overrides
    ) -> RunResultSchema:
        """
        Train one arm on the seeded split and score it on the held-out test share.

        Args:
            config (CliConfig): Base configuration.
            dataset (CorpusDataset): The corpus.
            seed (int): Run seed (split, initialization, shuffling).
            **overrides: CliConfig keys changed for this arm.

        Returns:
            RunResultSchema: Test metrics of the arm.
        """
        arm = config.model_copy(update={**overrides, "seed": seed})
        result = TrainingServices.train(dataset, arm.train_config())
        test = result.summary.test
        if test is None:
            test = AnalyticsServices.evaluate(result.model, Subset(dataset, result.split.test))
        return RunResultSchema(seed=seed, metrics=test)

    @staticmethod
    def compare_fusion(
        config: CliConfig,
        seeds: Sequence[int],
        methods: Sequence[FusionMethodEnum] = DEFAULT_FUSIONS,
    ) -> ExperimentReportSchema:
        runs: Dict[FusionMethodEnum, List[RunResultSchema]] = {method: [] for method in methods}
        for seed in seeds:
            dataset = ExperimentServices.corpus_dataset(config, seed)
            for method in methods:
                runs[method].append(
                    ExperimentServices.train_and_test(config, dataset, seed, fusion=method)
                )
        return ExperimentReportSchema(
            experiment="compare_fusion",
            seeds=list(seeds),
            rows=[_row(method.value, runs[method]) for method in methods],
        )

    @staticmethod
    def sweep_k(
        config: CliConfig, ks: Sequence[int], seeds: Sequence[int]
    ) -> ExperimentReportSchema:
        runs: Dict[int, List[RunResultSchema]] = {k: [] for k in ks}
        for seed in seeds:
            dataset = ExperimentServices.corpus_dataset(config, seed)
            for k in ks:
                runs[k].append(ExperimentServices.train_and_test(config, dataset, seed, k=k))
        return ExperimentReportSchema(
            experiment="sweep_k",
            seeds=list(seeds),
            rows=[_row(str(k), runs[k], token_count=k + 1) for k in ks],
        )

    @staticmethod
    def ablation(config: CliConfig, seeds: Sequence[int]) -> ExperimentReportSchema:
        runs: Dict[ModelVariantEnum, List[RunResultSchema]] = {
            variant: [] for variant in ABLATION_VARIANTS
        }
        for seed in seeds:
            dataset = ExperimentServices.corpus_dataset(config, seed)
            for variant in ABLATION_VARIANTS:
                runs[variant].append(
                    ExperimentServices.train_and_test(config, dataset, seed, variant=variant)
                )
        return ExperimentReportSchema(
            experiment="ablation",
            seeds=list(seeds),
            rows=[_row(variant.value, runs[variant]) for variant in ABLATION_VARIANTS],
        )

    @staticmethod
    def scenario_splits(split: SplitIndices, n: int, seed: int) -> Dict[str, SplitIndices]:
        """
        Training splits over clean samples (indices < n) and their obfuscated
        twins (index + n) for every robustness scenario. Test shares stay empty;
        every scenario is scored on the held-out clean and obfuscated tests.

        Args:
            split (SplitIndices): The seeded 80/10/10 split of the clean corpus.
            n (int): Corpus size; twin i sits at n + i.
            seed (int): Seed for the even mix.

        Returns:
            Dict[str, SplitIndices]: Split per scenario name.
        """
        def twin(indices) -> List[int]:
            return [n + int(i) for i in indices]

        pool = np.random.default_rng(seed).permutation(split.train + split.val)
        half = len(pool) // 2
        return {
            CLEAN_SCENARIO: SplitIndices(train=list(split.train), val=[], test=[]),
            LAB_SCENARIO: SplitIndices(train=twin(split.train), val=twin(split.val), test=[]),
            PRACTICAL_LIGHT_SCENARIO: SplitIndices(
                train=list(split.train) + twin(split.val), val=[], test=[]
            ),
            PRACTICAL_EVEN_SCENARIO: SplitIndices(
                train=[int(i) for i in pool[:half]] + twin(pool[half:]), val=[], test=[]
            ),
        }

    @staticmethod
    def robustness(
        config: CliConfig,
        seeds: Sequence[int],
        transforms: Sequence[ObfuscationTransform],
        scenarios: Sequence[str] = ROBUSTNESS_SCENARIOS,
    ) -> RobustnessReportSchema:
        """
        Clean versus obfuscated test F1 per variant and training scenario:
        clean-only training, training on obfuscated samples only (lab), and
        80% clean + 10% obfuscated or 45% + 45% training (practical).

        Args:
            config (CliConfig): Base configuration.
            seeds (Sequence[int]): Run seeds.
            transforms (Sequence[ObfuscationTransform]): Obfuscations for the twins.
            scenarios (Sequence[str]): Scenario names to run.

        Returns:
            RobustnessReportSchema: One row per (variant, scenario).
        """
        unknown = set(scenarios) - set(ROBUSTNESS_SCENARIOS)
        if unknown:
            raise ConfigError(
                f"unknown robustness scenarios {sorted(unknown)}; "
                f"expected some of {list(ROBUSTNESS_SCENARIOS)}"
            )
        scores: Dict[tuple, List[tuple]] = {}
        for seed in seeds:
            corpus_config = config.corpus_config().model_copy(update={"seed": seed})
            corpus = CorpusServices.generate_samples(corpus_config, transforms)
            clean = CorpusDataset.from_pairs(
                corpus.clean, corpus_config.dex_geometry, corpus_config.xml_geometry
            )
            obfuscated = CorpusDataset.from_pairs(
                corpus.obfuscated, corpus_config.dex_geometry, corpus_config.xml_geometry
            )
            combined = CorpusDataset(clean.items + obfuscated.items)
            split = TrainingServices.split(len(clean), seed)
            splits = ExperimentServices.scenario_splits(split, len(clean), seed)

            for variant in ROBUSTNESS_VARIANTS:
                arm = config.model_copy(update={"variant": variant, "seed": seed})
                for scenario in scenarios:
                    result = TrainingServices.train(
                        combined, arm.train_config(), split=splits[scenario]
                    )
                    clean_f1 = AnalyticsServices.evaluate(
                        result.model, Subset(clean, split.test)
                    ).f1_or_zero
                    obfuscated_f1 = AnalyticsServices.evaluate(
                        result.model, Subset(obfuscated, split.test)
                    ).f1_or_zero
                    scores.setdefault((variant.value, scenario), []).append(
                        (clean_f1, obfuscated_f1)
                    )

        rows = []
        for (variant, scenario), pairs in scores.items():
            clean_f1, obfuscated_f1 = np.mean(pairs, axis=0)
            rows.append(
                RobustnessRowSchema(
                    variant=variant,
                    scenario=scenario,
                    clean_f1=float(clean_f1),
                    obfuscated_f1=float(obfuscated_f1),
                    drop=float(clean_f1 - obfuscated_f1),
                )
            )
            logger.info(f"{variant}/{scenario}: F1 {clean_f1:.4f} -> {obfuscated_f1:.4f}")
        return RobustnessReportSchema(
            seeds=list(seeds),
            transforms=[describe_transform(transform) for transform in transforms],
            rows=rows,
        )

    @staticmethod
    def drift(
        config: CliConfig,
        seeds: Sequence[int],
        drifts: Sequence[float],
        test_size: int = 0,
    ) -> ExperimentReportSchema:
        """
        Train at drift 0, then score on fresh corpora generated at each drift level.

        Args:
            config (CliConfig): Base configuration.
            seeds (Sequence[int]): Run seeds.
            drifts (Sequence[float]): Drift levels t of the test corpora.
            test_size (int): Samples per test corpus; a fifth of the corpus when 0.

        Returns:
            ExperimentReportSchema: One row per drift level.
        """
        size = test_size or max(config.corpus_n // 5, 2)
        runs: Dict[float, List[RunResultSchema]] = {t: [] for t in drifts}
        for seed in seeds:
            dataset = ExperimentServices.corpus_dataset(config, seed)
            arm = config.model_copy(update={"seed": seed})
            model = TrainingServices.train(dataset, arm.train_config()).model
            for t in drifts:
                shifted = ExperimentServices.corpus_dataset(
                    config.model_copy(update={"corpus_n": size}), seed + 1, drift=t
                )
                runs[t].append(
                    RunResultSchema(seed=seed, metrics=AnalyticsServices.evaluate(model, shifted))
                )
        return ExperimentReportSchema(
            experiment="drift",
            seeds=list(seeds),
            rows=[_row(f"t={t:g}", runs[t]) for t in drifts],
        )
