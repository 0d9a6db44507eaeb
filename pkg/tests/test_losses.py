import math

import numpy as np
import pytest

import pathnas as pn
from pathnas.autodiff import Adam, Tensor, finite_difference_grads, max_relative_error
from pathnas.cluster import k_medoids
from pathnas.errors import ParameterError
from pathnas.losses import FinetuneConfig, PretrainConfig, multi_k_pretrain_loss
from pathnas.predictor import default_config_for

from conftest import distinct_samples, random_archs


def direct_pretrain_term(e_i, centers, j, taus, include_positive=False):
    """Literal transcription of the per-sample contrast term."""
    num = math.exp(float(e_i @ centers[j]) / taus[j])
    denom = 0.0
    for k in range(len(centers)):
        if not include_positive and k == j:
            continue
        denom += math.exp(float(e_i @ centers[k]) / taus[k])
    return -math.log(num / denom)


def direct_finetune(preds, ys):
    """Literal transcription of the pairwise ranking sum."""
    total = 0.0
    n = len(ys)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dy = ys[i] - ys[j]
            dp = preds[i] - preds[j]
            if np.sign(dp) != np.sign(dy) and dy != 0:
                total += abs(dp)
    return total


class TestPretrainLoss:
    def test_worked_example_equals_minus_one(self):
        queries = Tensor(np.array([[1.0, 0.0]]))
        protos = Tensor(np.array([[1.0, 0.0], [0.0, 0.0]]))
        loss = pn.pretrain_loss(queries, protos, [0], [1.0, 1.0])
        # positive logit 1, single negative logit 0: -log(e / 1) = -1
        assert abs(loss.item() + 1.0) < 1e-12

    def test_symmetric_logits_give_zero(self):
        queries = Tensor(np.array([[0.5, 0.5]]))
        protos = Tensor(np.array([[0.3, 0.3], [0.3, 0.3]]))
        loss = pn.pretrain_loss(queries, protos, [0], [1.0, 1.0])
        assert abs(loss.item()) < 1e-12

    def test_batch_is_sum_of_per_sample_terms(self):
        rng = np.random.default_rng(0)
        n, k, d = 17, 4, 6
        q = rng.standard_normal((n, d))
        c = rng.standard_normal((k, d))
        asg = rng.integers(0, k, size=n)
        taus = rng.uniform(0.5, 2.0, size=k)
        got = pn.pretrain_loss(Tensor(q), Tensor(c), asg, taus).item()
        want = sum(direct_pretrain_term(q[i], c, asg[i], taus) for i in range(n))
        assert abs(got - want) < 1e-10 * max(1.0, abs(want))

    def test_positive_in_denominator_variant(self):
        rng = np.random.default_rng(1)
        q = rng.standard_normal((9, 5))
        c = rng.standard_normal((3, 5))
        asg = rng.integers(0, 3, size=9)
        taus = rng.uniform(0.5, 2.0, size=3)
        got = pn.pretrain_loss(
            Tensor(q), Tensor(c), asg, taus, include_positive_in_denominator=True
        ).item()
        want = sum(
            direct_pretrain_term(q[i], c, asg[i], taus, include_positive=True)
            for i in range(9)
        )
        assert abs(got - want) < 1e-10 * max(1.0, abs(want))
        # a proper softmax cross entropy is nonnegative
        assert got > 0

    def test_single_prototype_rejected(self):
        with pytest.raises(ParameterError):
            pn.pretrain_loss(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 3))), [0, 0], [1.0])

    def test_unfloored_taus_rejected(self):
        with pytest.raises(ParameterError):
            pn.pretrain_loss(
                Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), [0, 1], [1.0, 1e-9]
            )

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        q = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
        c = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        asg = rng.integers(0, 3, size=6)
        taus = rng.uniform(0.5, 2.0, size=3)
        loss = pn.pretrain_loss(q, c, asg, taus)
        loss.backward()
        analytic = {"q": q.grad.copy(), "c": c.grad.copy()}
        numeric = finite_difference_grads(
            lambda: pn.pretrain_loss(q, c, asg, taus).item(), {"q": q, "c": c}
        )
        assert max_relative_error(analytic, numeric) < 1e-6


class TestFinetuneLoss:
    def test_swapped_pair_worked_example(self):
        loss = pn.finetune_loss(Tensor(np.array([0.91, 0.90])), [0.90, 0.91])
        assert abs(loss.item() - 0.02) < 1e-15

    def test_concordant_predictions_zero(self):
        loss = pn.finetune_loss(Tensor(np.array([0.2, 0.5, 0.9])), [0.1, 0.4, 0.8])
        assert loss.item() == 0.0

    def test_tied_targets_contribute_nothing(self):
        loss = pn.finetune_loss(Tensor(np.array([0.3, 0.8])), [0.5, 0.5])
        assert loss.item() == 0.0

    def test_needs_two_samples(self):
        with pytest.raises(ParameterError):
            pn.finetune_loss(Tensor(np.array([0.3])), [0.5])

    def test_randomized_against_direct_transcription(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            preds = rng.uniform(0, 1, size=n)
            ys = np.round(rng.uniform(0, 1, size=n), 1)  # rounding forces ties
            got = pn.finetune_loss(Tensor(preds), ys).item()
            assert abs(got - direct_finetune(preds, ys)) < 1e-12

    def test_pair_domain_is_n_times_n_minus_one(self):
        n = 9
        preds = np.linspace(0.9, 0.1, n)  # strictly decreasing
        ys = np.linspace(0.1, 0.9, n)  # strictly increasing: all pairs discordant
        got = pn.finetune_loss(Tensor(preds), ys).item()
        terms = [
            abs(preds[i] - preds[j])
            for i in range(n)
            for j in range(n)
            if i != j
        ]
        assert len(terms) == n * (n - 1)
        assert abs(got - sum(terms)) < 1e-12

    def test_nonnegative_property(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            loss = pn.finetune_loss(
                Tensor(rng.uniform(0, 1, n)), rng.uniform(0, 1, n)
            ).item()
            assert loss >= 0.0

    def test_invariant_under_monotone_target_transforms(self):
        rng = np.random.default_rng(5)
        preds = rng.uniform(0, 1, 10)
        ys = rng.uniform(0, 1, 10)
        base = pn.finetune_loss(Tensor(preds), ys).item()
        for transform in (lambda y: y**3, lambda y: np.exp(2 * y) / 20, lambda y: 0.5 * y + 0.1):
            assert abs(pn.finetune_loss(Tensor(preds), transform(ys)).item() - base) < 1e-12


class TestConfigs:
    def test_pretrain_config_validation(self):
        with pytest.raises(ParameterError):
            PretrainConfig(batch_size=8, cluster_sizes=(10,))
        with pytest.raises(ParameterError):
            PretrainConfig(learning_rate=0.0)
        with pytest.raises(ParameterError):
            PretrainConfig(cluster_sizes=())

    def test_finetune_config_validation(self):
        with pytest.raises(ParameterError):
            FinetuneConfig(epochs=0)
        with pytest.raises(ParameterError):
            FinetuneConfig(batch_size=1)


class TestPretrainLoop:
    def test_multi_k_average_is_arithmetic_mean(self, small_model, toy_space, toy_table):
        archs = random_archs(toy_space, 24, seed=1)
        hard = np.stack([pn.encode_architecture(a, toy_space, toy_table) for a in archs])
        avg, per_k = multi_k_pretrain_loss(
            small_model, archs, hard, (2, 3, 4), np.random.default_rng(0)
        )
        assert abs(avg.item() - np.mean(per_k)) < 1e-9 * max(1.0, abs(np.mean(per_k)))

    def test_loss_decreases_in_at_least_9_of_10_seeds(self, toy_space, toy_table):
        wins = 0
        for seed in range(10):
            cfg = default_config_for(
                toy_space, toy_table, seed=seed,
                gin_dim=4, gin_layers=2, node_dim=4, feature_dim=4, token_dim=8, heads=2,
            )
            model = pn.Predictor(cfg, toy_space, toy_table)
            losses = []
            pn.pretrain(
                model, toy_space, toy_table,
                PretrainConfig(batch_size=64, epochs=50, cluster_sizes=(4, 8), seed=seed),
                log_fn=lambda r: losses.append(r["loss"]),
            )
            start = np.mean(losses[:5])
            end = np.mean(losses[-5:])
            if end <= 0.8 * start:
                wins += 1
        assert wins >= 9

    def test_seeded_pretrain_reproducible(self, toy_space, toy_table):
        final = []
        for _ in range(2):
            cfg = default_config_for(
                toy_space, toy_table, seed=3,
                gin_dim=4, gin_layers=2, node_dim=4, feature_dim=4, token_dim=8, heads=2,
            )
            model = pn.Predictor(cfg, toy_space, toy_table)
            pn.pretrain(
                model, toy_space, toy_table,
                PretrainConfig(batch_size=32, epochs=3, cluster_sizes=(3,), seed=5),
            )
            final.append({k: p.data.copy() for k, p in model.params.items()})
        for k in final[0]:
            assert np.array_equal(final[0][k], final[1][k])


class TestFinetuneLoop:
    def test_needs_two_labeled_samples(self, small_model, toy_space):
        land = pn.SyntheticLandscape(op_set=toy_space.op_set, seed=0)
        samples = distinct_samples(toy_space, land, 1, seed=0)
        with pytest.raises(ParameterError):
            pn.finetune(small_model, samples, FinetuneConfig())

    def test_zero_loss_is_a_fixpoint(self, small_model, toy_space):
        # a predictor already ordering two samples correctly gets no update
        land = pn.SyntheticLandscape(op_set=toy_space.op_set, seed=0)
        samples = distinct_samples(toy_space, land, 6, seed=2)
        preds = small_model.scores([s.arch for s in samples])
        order = np.argsort(preds)
        ys = np.sort([s.val_acc for s in samples])
        relabeled = [
            pn.LabeledSample(arch=samples[i].arch, val_acc=ys[rank], source="synthetic")
            for rank, i in enumerate(order)
        ]
        before = {k: p.data.copy() for k, p in small_model.params.items()}
        losses = []
        pn.finetune(
            small_model, relabeled, FinetuneConfig(epochs=3, seed=0),
            log_fn=lambda r: losses.append(r["loss"]),
        )
        assert all(l == 0.0 for l in losses)
        for k, p in small_model.params.items():
            assert np.array_equal(before[k], p.data)

    def test_kendall_improves_after_100_labels(self, toy_space, toy_table):
        land = pn.SyntheticLandscape(op_set=toy_space.op_set, seed=0)
        train = distinct_samples(toy_space, land, 100, seed=10)
        test = distinct_samples(toy_space, land, 150, seed=77)[100:]
        wins = 0
        for seed in range(10):
            cfg = default_config_for(
                toy_space, toy_table, seed=seed,
                gin_dim=4, gin_layers=2, node_dim=8, feature_dim=8, token_dim=16, heads=2,
            )
            model = pn.Predictor(cfg, toy_space, toy_table)
            t_arch = [s.arch for s in test]
            t_val = [s.val_acc for s in test]
            before = pn.kendall_tau(model.scores(t_arch), t_val)
            pn.finetune(model, train, FinetuneConfig(epochs=20, seed=seed))
            after = pn.kendall_tau(model.scores(t_arch), t_val)
            if after > before:
                wins += 1
        assert wins >= 9

    def test_mse_objective_trains(self, small_model, toy_space):
        land = pn.SyntheticLandscape(op_set=toy_space.op_set, seed=0)
        samples = distinct_samples(toy_space, land, 32, seed=4)
        losses = []
        pn.finetune(
            small_model, samples, FinetuneConfig(epochs=10, seed=1),
            objective="mse", log_fn=lambda r: losses.append(r["loss"]),
        )
        assert losses[-1] < losses[0]

    def test_unknown_objective_rejected(self, small_model, toy_space):
        land = pn.SyntheticLandscape(op_set=toy_space.op_set, seed=0)
        samples = distinct_samples(toy_space, land, 4, seed=5)
        with pytest.raises(ParameterError):
            pn.finetune(small_model, samples, FinetuneConfig(), objective="huber")


class TestOptimizerContract:
    def test_zero_learning_rate_is_identity(self):
        p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.0)
        for _ in range(5):
            opt.zero_grad()
            (p * p).sum().backward()
            opt.step()
        assert np.array_equal(p.data, np.array([1.0, 2.0, 3.0]))
