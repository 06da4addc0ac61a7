from io import BytesIO
from pathlib import Path
from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
from sklearn.metrics import ConfusionMatrixDisplay, confusion_matrix
from torch.utils.data import DataLoader, Dataset

from bido.models.detector import BidoDetector
from bido.models.enums import LabelEnum
from bido.schemas.report import EvalReportSchema, MetricsSchema
from bido.utils.errors import EmptyEvalSet, IoFailure
from bido.utils.logger import get_logger

logger = get_logger(__name__)

LABELS = [label.value for label in LabelEnum]
LABEL_NAMES = [label.name.lower() for label in LabelEnum]


class AnalyticsServices:
    @staticmethod
    def predict(
        model: BidoDetector, dataset: Dataset, batch_size: int = 64
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Run the model over a dataset.

        Args:
            model (BidoDetector): The detector.
            dataset (Dataset): Yields (dex image, xml image, label).
            batch_size (int): Inference batch size.

        Returns:
            Tuple[np.ndarray, np.ndarray]: True labels and predicted labels.
        """
        if len(dataset) == 0:
            raise EmptyEvalSet("evaluation set is empty")

        model.eval()
        y_true, y_pred = [], []
        with torch.no_grad():
            for dex_images, xml_images, labels in DataLoader(
                dataset, batch_size=batch_size, shuffle=False
            ):
                y_pred.append(model.predict(dex_images, xml_images).numpy())
                y_true.append(labels.numpy())
        return np.concatenate(y_true), np.concatenate(y_pred)

    @staticmethod
    def metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> MetricsSchema:
        """
        Confusion counts and ratios with malicious as the positive class.

        Args:
            y_true (Sequence[int]): True labels.
            y_pred (Sequence[int]): Predicted labels.

        Returns:
            MetricsSchema: Counts plus accuracy, precision, recall and F1.
        """
        if len(y_true) == 0:
            raise EmptyEvalSet("no predictions to score")
        tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=LABELS).ravel()
        return MetricsSchema.from_counts(tp=int(tp), tn=int(tn), fp=int(fp), fn=int(fn))

    @staticmethod
    def evaluate(model: BidoDetector, dataset: Dataset) -> MetricsSchema:
        y_true, y_pred = AnalyticsServices.predict(model, dataset)
        return AnalyticsServices.metrics(y_true, y_pred)

    @staticmethod
    def report(y_true: Sequence[int], y_pred: Sequence[int]) -> EvalReportSchema:
        """
        Counts and ratios plus the confusion matrix keyed by actual and predicted class.

        Args:
            y_true (Sequence[int]): True labels.
            y_pred (Sequence[int]): Predicted labels.

        Returns:
            EvalReportSchema: The evaluation report.
        """
        cm = confusion_matrix(y_true, y_pred, labels=LABELS).tolist()
        correct_predictions = sum(cm[i][i] for i in range(len(LABELS)))
        total = sum(cm[i][j] for i in range(len(LABELS)) for j in range(len(LABELS)))

        cm_dict = {}
        for i, actual_class in enumerate(LABEL_NAMES):
            cm_dict[f"Actual {actual_class}"] = {}
            for j, predicted_class in enumerate(LABEL_NAMES):
                cm_dict[f"Actual {actual_class}"][f"Predicted {predicted_class}"] = cm[i][j]

        return EvalReportSchema(
            metrics=AnalyticsServices.metrics(y_true, y_pred),
            correct_predictions=correct_predictions,
            incorrect_predictions=total - correct_predictions,
            total=total,
            confusion_matrix=cm_dict,
        )

    @staticmethod
    def plot_confusion(
        y_true: Sequence[int], y_pred: Sequence[int], path: Optional[Path] = None
    ) -> BytesIO:
        """
        Render the confusion matrix as a PNG.

        Args:
            y_true (Sequence[int]): True labels.
            y_pred (Sequence[int]): Predicted labels.
            path (Optional[Path]): Also write the figure here.

        Returns:
            BytesIO: The PNG image data.
        """
        fig, ax = plt.subplots(figsize=(5, 5))
        ConfusionMatrixDisplay.from_predictions(
            y_true,
            y_pred,
            labels=LABELS,
            display_labels=LABEL_NAMES,
            cmap=plt.cm.Blues,
            ax=ax,
            colorbar=False,
        )
        ax.set_title("Detection Confusion Matrix")
        fig.tight_layout()

        image_stream = BytesIO()
        fig.savefig(image_stream, format="png")
        plt.close(fig)
        image_stream.seek(0)

        if path is not None:
            try:
                Path(path).write_bytes(image_stream.getvalue())
            except OSError as exc:
                raise IoFailure(f"cannot write confusion plot {path}: {exc}")
            logger.info(f"confusion matrix plot written to {path}")
        return image_stream
