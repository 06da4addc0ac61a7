import itertools

import pytest
import torch
from torch.autograd import gradcheck

from bido.models.metric import (
    MahalanobisMetric,
    build_pairs,
    contrastive_loss,
    mahalanobis,
)
from bido.utils.errors import ConfigError, DegenerateBatch, ShapeMismatch


def rand(*shape, seed=0, grad=False):
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=generator, dtype=torch.float64, requires_grad=grad)


def random_factor(dim, seed):
    return torch.tril(rand(dim, dim, seed=seed))


class TestMahalanobis:
    @pytest.mark.parametrize("seed", range(10))
    def test_axioms(self, seed):
        factor = random_factor(5, seed)
        a, b, c = rand(5, seed=seed + 1), rand(5, seed=seed + 2), rand(5, seed=seed + 3)
        assert float(mahalanobis(a, b, factor)) >= 0
        assert float(mahalanobis(a, b, factor)) == pytest.approx(float(mahalanobis(b, a, factor)))
        assert float(mahalanobis(a, a, factor)) <= 1.0000001e-6

        d_ab = float(mahalanobis(a, b, factor, epsilon=0.0))
        d_bc = float(mahalanobis(b, c, factor, epsilon=0.0))
        d_ac = float(mahalanobis(a, c, factor, epsilon=0.0))
        assert d_ac <= d_ab + d_bc + 1e-9

    def test_identity_is_euclidean(self):
        a, b = rand(4, 7), rand(4, 7, seed=1)
        distances = mahalanobis(a, b, torch.eye(7, dtype=torch.float64), epsilon=0.0)
        torch.testing.assert_close(distances, torch.linalg.vector_norm(a - b, dim=-1))

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            mahalanobis(rand(3), rand(4), torch.eye(3, dtype=torch.float64))
        with pytest.raises(ShapeMismatch):
            mahalanobis(rand(3), rand(3), torch.eye(4, dtype=torch.float64))

    @pytest.mark.parametrize("seed", range(50))
    def test_gradients(self, seed):
        inputs = (
            rand(3, 4, seed=seed, grad=True),
            rand(3, 4, seed=seed + 1, grad=True),
            rand(4, 4, seed=seed + 2, grad=True),
        )
        assert gradcheck(mahalanobis, inputs)


class TestMetricModule:
    def test_precision_is_psd(self, session):
        metric = MahalanobisMetric(6)
        with torch.no_grad():
            metric.raw_factor.copy_(rand(6, 6, seed=4))
        precision = metric.precision
        torch.testing.assert_close(precision, precision.T)
        for seed in range(50):
            x = rand(6, seed=100 + seed)
            assert float(x @ precision @ x) >= -1e-12

    def test_starts_euclidean(self, session):
        metric = MahalanobisMetric(3, epsilon=0.0)
        a, b = rand(3), rand(3, seed=1)
        assert float(metric.distance(a, b)) == pytest.approx(float(torch.linalg.vector_norm(a - b)))

    def test_factor_is_lower_triangular(self, session):
        metric = MahalanobisMetric(4)
        with torch.no_grad():
            metric.raw_factor.fill_(1.0)
        assert float(torch.triu(metric.factor, diagonal=1).abs().sum()) == 0.0

    def test_training_pulls_classes_apart(self, session):
        # classes differ along the first axis only; the other axes are wide noise
        generator = torch.Generator().manual_seed(5)
        labels = [0] * 16 + [1] * 16
        embeddings = 2.0 * torch.randn(32, 4, generator=generator)
        embeddings[:, 0] = torch.tensor([-0.5] * 16 + [0.5] * 16) + 0.05 * torch.randn(
            32, generator=generator
        )
        pairs = build_pairs(labels)
        metric = MahalanobisMetric(4)

        def mean_distance(index_pairs):
            first, second = zip(*index_pairs)
            with torch.no_grad():
                return float(
                    metric.distance(embeddings[list(first)], embeddings[list(second)]).mean()
                )

        assert mean_distance(pairs.positive) > 0.8 * mean_distance(pairs.negative)
        for _ in range(200):
            (grad,) = torch.autograd.grad(metric(embeddings, labels), [metric.raw_factor])
            with torch.no_grad():
                metric.raw_factor -= 0.01 * grad
        assert mean_distance(pairs.positive) < 0.5 * mean_distance(pairs.negative)


class TestBuildPairs:
    def test_partition(self):
        pairs = build_pairs([0, 0, 1])
        assert pairs.positive == [(0, 1)]
        assert pairs.negative == [(0, 2), (1, 2)]

    def test_single_sample_is_degenerate(self):
        with pytest.raises(DegenerateBatch):
            build_pairs([1])

    def test_margin_must_be_positive(self):
        with pytest.raises(ConfigError):
            build_pairs([0, 1], margin=0.0)


class TestContrastiveLoss:
    def test_identical_positives_near_zero(self):
        embeddings = torch.ones(2, 3, dtype=torch.float64)
        loss = contrastive_loss(embeddings, [1, 1], torch.eye(3, dtype=torch.float64))
        assert float(loss) == pytest.approx(0.0, abs=1e-5)

    def test_coincident_negatives_cost_margin(self):
        embeddings = torch.ones(2, 3, dtype=torch.float64)
        loss = contrastive_loss(embeddings, [0, 1], torch.eye(3, dtype=torch.float64), margin=1.0)
        assert float(loss) == pytest.approx(1.0, abs=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_pairwise_oracle(self, seed):
        embeddings = rand(6, 4, seed=seed)
        labels = [0, 1, 1, 0, 1, 0]
        factor = random_factor(4, seed + 10)
        margin = 3.0

        positives, negatives = [], []
        for i, j in itertools.combinations(range(6), 2):
            diff = (embeddings[i] - embeddings[j]) @ factor
            distance = torch.sqrt((diff * diff).sum() + 1e-12)
            if labels[i] == labels[j]:
                positives.append(distance)
            else:
                negatives.append(torch.clamp(margin - distance, min=0.0))
        oracle = torch.stack(positives).mean() + torch.stack(negatives).mean()

        loss = contrastive_loss(embeddings, labels, factor, margin)
        assert abs(float(loss) - float(oracle)) <= 1e-10

    def test_single_class_batch_has_no_negative_term(self):
        embeddings = rand(3, 2)
        loss = contrastive_loss(embeddings, [1, 1, 1], torch.eye(2, dtype=torch.float64))
        assert float(loss) > 0

    @pytest.mark.parametrize("seed", range(50))
    def test_gradients(self, seed):
        labels = [0, 1, 0, 1]
        inputs = (rand(4, 3, seed=seed, grad=True), rand(3, 3, seed=seed + 1, grad=True))
        assert gradcheck(
            lambda e, f: contrastive_loss(e, labels, torch.tril(f), margin=10.0), inputs
        )
