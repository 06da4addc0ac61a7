import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Subset

from bido.models import ops
from bido.models.detector import BidoDetector, ModelOutput
from bido.schemas.config import LossWeights, TrainConfig
from bido.schemas.report import (
    EpochRecordSchema,
    MetricsSchema,
    SplitSizesSchema,
    TrainSummarySchema,
)
from bido.services.analytics import AnalyticsServices
from bido.services.checkpoint import CheckpointServices
from bido.services.optim import OptimizerServices
from bido.utils.dataset import CorpusDataset
from bido.utils.errors import (
    DegenerateCorpus,
    IoFailure,
    NonFinite,
    NumericalDivergence,
    ShapeMismatch,
)
from bido.utils.logger import get_logger
from bido.utils.session import experiment_session

logger = get_logger(__name__)

CHECKPOINT_NAME = "model.bido"
HISTORY_NAME = "history.jsonl"


class SplitIndices(NamedTuple):
    train: List[int]
    val: List[int]
    test: List[int]


@dataclass
class LossTerms:
    xml: torch.Tensor
    dex: torch.Tensor
    ops: torch.Tensor
    contrastive: torch.Tensor
    total: torch.Tensor


@dataclass
class TrainResult:
    model: BidoDetector
    split: SplitIndices
    summary: TrainSummarySchema

    @property
    def history(self) -> List[EpochRecordSchema]:
        return self.summary.history


class TrainingServices:
    @staticmethod
    def head_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """
        Softmax cross-entropy averaged over the batch.

        Args:
            logits (torch.Tensor): (B, 2) head logits.
            labels (torch.Tensor): (B,) integer labels.

        Returns:
            torch.Tensor: Scalar loss.
        """
        ops.check_finite(logits, "head logits")
        if logits.dim() != 2 or logits.shape[0] != labels.shape[0]:
            raise ShapeMismatch(
                f"logits {tuple(logits.shape)} do not match {labels.shape[0]} labels"
            )
        return ops.check_finite(F.cross_entropy(logits, labels.long()), "head loss")

    @staticmethod
    def joint_loss(
        l_xml: torch.Tensor,
        l_dex: torch.Tensor,
        l_ops: torch.Tensor,
        l_con: torch.Tensor,
        weights: LossWeights,
    ) -> torch.Tensor:
        """alpha * L_xml + beta * L_dex + gamma * L_ops + delta * L_con."""
        total = (
            weights.alpha * l_xml
            + weights.beta * l_dex
            + weights.gamma * l_ops
            + weights.delta * l_con
        )
        return ops.check_finite(torch.as_tensor(total, dtype=torch.float64), "joint loss")

    @staticmethod
    def loss_terms(
        model: BidoDetector,
        output: ModelOutput,
        labels: torch.Tensor,
        weights: LossWeights,
    ) -> LossTerms:
        """
        Every loss term of a forward pass; heads absent from the variant count as zero.

        Args:
            model (BidoDetector): The detector that produced `output`.
            output (ModelOutput): Its forward pass.
            labels (torch.Tensor): Batch labels.
            weights (LossWeights): Term weights.

        Returns:
            LossTerms: The individual terms and their weighted sum.
        """
        zero = output.embedding.new_zeros(())
        l_xml = (
            TrainingServices.head_loss(output.logits_xml, labels)
            if output.logits_xml is not None
            else zero
        )
        l_dex = (
            TrainingServices.head_loss(output.logits_dex, labels)
            if output.logits_dex is not None
            else zero
        )
        l_ops = (
            TrainingServices.head_loss(output.logits_ops, labels)
            if output.logits_ops is not None
            else zero
        )
        l_con = zero
        if model.config.use_metric and weights.delta > 0 and labels.shape[0] >= 2:
            l_con = model.metric(output.embedding, labels)
        total = TrainingServices.joint_loss(l_xml, l_dex, l_ops, l_con, weights)
        return LossTerms(xml=l_xml, dex=l_dex, ops=l_ops, contrastive=l_con, total=total)

    @staticmethod
    def split(
        n: int, seed: int, train_fraction: float = 0.8, val_fraction: float = 0.1
    ) -> SplitIndices:
        """
        Seeded shuffle into train / validation / test indices.

        Args:
            n (int): Number of samples.
            seed (int): Shuffle seed.
            train_fraction (float): Train share.
            val_fraction (float): Validation share; the rest is test.

        Returns:
            SplitIndices: Disjoint index lists covering range(n).
        """
        order = np.random.default_rng(seed).permutation(n).tolist()
        n_train = min(int(round(n * train_fraction)), n)
        n_val = min(int(round(n * val_fraction)), n - n_train)
        return SplitIndices(
            train=order[:n_train],
            val=order[n_train : n_train + n_val],
            test=order[n_train + n_val :],
        )

    @staticmethod
    def train(
        dataset: CorpusDataset,
        config: TrainConfig,
        out_dir: Optional[Path] = None,
        split: Optional[SplitIndices] = None,
    ) -> TrainResult:
        """
        Train a detector with SGD momentum and step decay; the final epoch is kept.

        Args:
            dataset (CorpusDataset): Labeled pairs.
            config (TrainConfig): Model, loss weights and schedule.
            out_dir (Optional[Path]): Where to write the checkpoint and history.
            split (Optional[SplitIndices]): Explicit split; seeded 80/10/10 otherwise.

        Returns:
            TrainResult: The model, the split and the run summary.
        """
        if split is None:
            split = TrainingServices.split(
                len(dataset), config.seed, config.train_fraction, config.val_fraction
            )
        train_labels = {dataset.labels[i] for i in split.train}
        if len(train_labels) < 2:
            raise DegenerateCorpus(
                f"training split needs both classes, found {sorted(train_labels)}"
            )

        history: List[EpochRecordSchema] = []
        with experiment_session(config.seed) as generator:
            model = BidoDetector(config.model)
            params = [param for param in model.parameters() if param.requires_grad]
            state = OptimizerServices.build(
                params, config.lr, config.momentum, config.decay_factor, config.decay_every
            )
            loader = DataLoader(
                Subset(dataset, split.train),
                batch_size=config.batch_size,
                shuffle=True,
                generator=generator,
            )
            logger.info(
                f"training {config.model.variant.value} detector "
                f"({config.model.fusion.value} fusion, K={config.model.k}) on "
                f"{len(split.train)} samples for {config.epochs} epochs"
            )

            for epoch in range(config.epochs):
                lr = state.learning_rate
                model.train()
                sums = np.zeros(5)
                batches = 0
                for dex_images, xml_images, labels in loader:
                    try:
                        output = model(dex_images, xml_images)
                        terms = TrainingServices.loss_terms(model, output, labels, config.weights)
                    except NonFinite as exc:
                        raise NumericalDivergence(f"epoch {epoch}: {exc.detail}", epoch=epoch)
                    loss_value = terms.total.item()
                    if not math.isfinite(loss_value) or loss_value > config.divergence_threshold:
                        raise NumericalDivergence(
                            f"epoch {epoch}: joint loss {loss_value} diverged", epoch=epoch
                        )

                    grads = torch.autograd.grad(terms.total, params, allow_unused=True)
                    OptimizerServices.sgd_momentum_step(params, grads, state)
                    sums += [
                        loss_value,
                        float(terms.xml),
                        float(terms.dex),
                        float(terms.ops),
                        float(terms.contrastive),
                    ]
                    batches += 1
                state.end_epoch()

                means = sums / max(batches, 1)
                val = (
                    AnalyticsServices.evaluate(model, Subset(dataset, split.val))
                    if split.val
                    else None
                )
                record = EpochRecordSchema(
                    epoch=epoch,
                    lr=lr,
                    loss=means[0],
                    loss_xml=means[1],
                    loss_dex=means[2],
                    loss_ops=means[3],
                    loss_contrastive=means[4],
                    val=val,
                )
                history.append(record)
                logger.info(
                    f"epoch {epoch}: lr={lr:.6g} loss={record.loss:.6f}"
                    + (f" val_f1={val.f1}" if val is not None else "")
                )

            test: Optional[MetricsSchema] = (
                AnalyticsServices.evaluate(model, Subset(dataset, split.test))
                if split.test
                else None
            )

        summary = TrainSummarySchema(
            epochs=config.epochs,
            seed=config.seed,
            split=SplitSizesSchema(
                train=len(split.train), val=len(split.val), test=len(split.test)
            ),
            history=history,
            test=test,
        )
        if out_dir is not None:
            out_dir = Path(out_dir)
            checkpoint = CheckpointServices.save(model, out_dir / CHECKPOINT_NAME)
            TrainingServices.write_history(history, out_dir / HISTORY_NAME)
            summary.checkpoint = str(checkpoint)
        return TrainResult(model=model, split=split, summary=summary)

    @staticmethod
    def write_history(history: List[EpochRecordSchema], path: Path) -> None:
        try:
            with open(path, "w") as handle:
                for record in history:
                    handle.write(record.model_dump_json() + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write history {path}: {exc}")
