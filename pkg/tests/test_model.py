import math

import numpy as np
import pytest
import torch

from walkgen.graph import Graph
from walkgen.models import (
    MarkovModel,
    ModelConfig,
    TrainParams,
    fit_markov,
    load_model,
    sample_walks,
    save_model,
    train,
)
from walkgen.walks import WalkMatrix, build_corpus


@pytest.fixture
def bigram_corpus():
    # observed bigrams out of 1: 1->2 three times, 1->3 once
    return WalkMatrix(np.array([[1, 2], [1, 2], [1, 2], [1, 3]]), n=4)


@pytest.fixture(scope="module")
def small_graph():
    edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (4, 6), (6, 7), (2, 4)]
    return Graph(8, edges)


@pytest.fixture(scope="module")
def small_corpus(small_graph):
    return build_corpus(small_graph, m=200, k=8, seed=11)


class TestMarkov:
    def test_bigram_probabilities(self, bigram_corpus):
        model = fit_markov(bigram_corpus, order=1, smoothing=0.0)
        dist = model.next_distribution([1])
        assert dist[2] == pytest.approx(0.75)
        assert dist[3] == pytest.approx(0.25)
        assert dist.sum() == pytest.approx(1.0)

    def test_single_walk_deterministic(self):
        corpus = WalkMatrix(np.array([[1, 2, 3]]), n=4)
        model = fit_markov(corpus, order=1, smoothing=0.0)
        assert model.next_distribution([1])[2] == pytest.approx(1.0)

    def test_unseen_context_backoff_to_unigram(self):
        corpus = WalkMatrix(np.array([[1, 2, 3]]), n=5)
        model = fit_markov(corpus, order=1, smoothing=0.0)
        dist = model.next_distribution([4])  # node 4 never observed as context
        # unigram over {1, 2, 3}
        assert dist[1] == pytest.approx(1 / 3)
        assert dist[2] == pytest.approx(1 / 3)
        assert dist[3] == pytest.approx(1 / 3)

    def test_order2_reproduces_second_order_process(self):
        # deterministic 2nd-order dynamics on 4 nodes: next = f(prev2, prev1),
        # where a first-order model is ambiguous (1 follows both 0->1->2 and 2->1->3)
        walks = np.array([[0, 1, 2, 1, 3], [0, 1, 2, 1, 3], [2, 1, 3, 0, 1]])
        corpus = WalkMatrix(walks, n=4)
        model = fit_markov(corpus, order=2, smoothing=0.0)
        assert model.next_distribution([0, 1])[2] == pytest.approx(1.0)
        assert model.next_distribution([2, 1])[3] == pytest.approx(1.0)

    def test_order2_backs_off_to_order1(self):
        corpus = WalkMatrix(np.array([[1, 2, 3, 1]]), n=5)
        model = fit_markov(corpus, order=2, smoothing=0.0)
        # context (3, 2) never seen; order-1 context 2 predicts 3
        assert model.next_distribution([3, 2])[3] == pytest.approx(1.0)

    def test_smoothing_spreads_mass(self):
        corpus = WalkMatrix(np.array([[1, 2]]), n=3)
        model = fit_markov(corpus, order=1, smoothing=1.0)
        dist = model.next_distribution([1])
        assert dist[2] == pytest.approx(2 / 4)  # (1+1)/(1+3*1) over 3 nodes
        assert dist[0] == pytest.approx(1 / 4)
        assert dist[model.start_token] == 0.0

    def test_walk_log_prob(self, bigram_corpus):
        model = fit_markov(bigram_corpus, order=1, smoothing=0.0)
        # P(first=1) = 1, P(2|1) = 0.75
        assert model.walk_log_prob([1, 2]) == pytest.approx(math.log(0.75))

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            fit_markov(WalkMatrix(np.zeros((0, 3), dtype=int), n=2))

    def test_argmax_at_zero_temperature(self, bigram_corpus):
        model = fit_markov(bigram_corpus, order=1, smoothing=0.0)
        walks = sample_walks(model, [1] * 20, 2, temperature=0.0, seed=0)
        assert (walks.walks[:, 1] == 2).all()


class TestTraining:
    def test_deterministic_trajectory(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=7)
        hyper = {"lr": 3e-3, "batch": 64, "epochs": 3, "seed": 5}
        _, r1 = train(small_corpus, config, hyper)
        _, r2 = train(small_corpus, config, hyper)
        assert r1.loss_trajectory == r2.loss_trajectory
        assert r1.parameter_count == r2.parameter_count

    def test_two_node_graph_drives_ce_to_zero(self):
        # every next node (including the first, start fixed) is deterministic
        corpus = WalkMatrix(np.tile([0, 1, 0, 1, 0, 1, 0, 1], (64, 1)), n=2)
        config = ModelConfig(vocab=3, depth=1, width=16, heads=2, context_len=7)
        model, report = train(corpus, config, {"lr": 1e-2, "batch": 32, "epochs": 200, "seed": 1})
        assert report.final_cross_entropy < 0.05
        assert model.next_distribution([0])[1] >= 0.99

    def test_untrained_model_near_uniform(self, small_corpus):
        config = ModelConfig(vocab=9, depth=2, width=32, heads=2, context_len=7)
        model, report = train(small_corpus, config, {"lr": 1e-3, "batch": 64, "epochs": 0, "seed": 2})
        n = 8
        # cross-entropy of the init against the corpus ~ ln(n) (within 10%)
        total, count = 0.0, 0
        for row in small_corpus.walks[:50]:
            total += -model.walk_log_prob(row)
            count += len(row)
        assert total / count == pytest.approx(math.log(n), rel=0.10)
        dist = model.next_distribution([0, 1, 2])
        entropy = -(dist * np.log(np.clip(dist, 1e-12, None))).sum()
        assert entropy >= 0.9 * math.log(9)

    def test_context_len_too_short_rejected(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=5)
        with pytest.raises(ValueError, match="context_len"):
            train(small_corpus, config, {"lr": 1e-3, "batch": 32, "epochs": 1, "seed": 0})

    def test_vocab_must_reserve_start_token(self, small_corpus):
        config = ModelConfig(vocab=8, depth=1, width=16, heads=2, context_len=7)
        with pytest.raises(ValueError, match="start token"):
            train(small_corpus, config, {"lr": 1e-3, "batch": 32, "epochs": 1, "seed": 0})

    def test_nan_loss_aborts_with_diagnostics(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=7)
        with pytest.raises(RuntimeError, match="non-finite loss"):
            train(small_corpus, config, {"lr": 1e30, "batch": 64, "epochs": 3, "seed": 0})


class TestDistributions:
    @pytest.fixture(scope="class")
    def trained(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=15)
        model, _ = train(small_corpus, config, {"lr": 3e-3, "batch": 64, "epochs": 2, "seed": 7})
        return model

    def test_normalization_1000_random_prefixes(self, trained):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            length = int(rng.integers(1, 8))
            prefix = rng.integers(0, 8, size=length).tolist()
            dist = trained.next_distribution(prefix)
            assert abs(dist.sum() - 1.0) <= 1e-6
            assert (dist >= 0).all()

    def test_empty_prefix_rejected(self, trained):
        with pytest.raises(ValueError, match="empty prefix"):
            trained.next_distribution([])

    def test_out_of_vocab_rejected(self, trained):
        with pytest.raises(ValueError, match="out of vocab"):
            trained.walk_log_prob([0, 99])

    def test_start_mass_reported_but_not_sampled(self, trained):
        dist = trained.next_distribution([0])
        assert dist[trained.start_token] > 0  # softmax puts some mass there
        walks = sample_walks(trained, [0] * 64, 6, seed=3)
        assert (walks.walks != trained.start_token).all()


class TestLogProbAdditivity:
    @pytest.fixture(scope="class")
    def model64(self, small_corpus):
        config = ModelConfig(vocab=9, depth=2, width=16, heads=2, context_len=15)
        model, _ = train(
            small_corpus, config, {"lr": 3e-3, "batch": 64, "epochs": 1, "seed": 3},
            dtype=torch.float64,
        )
        return model

    def _chain(self, model, walk):
        probs, _ = model.begin(np.array([[model.start_token]]))
        total = math.log(probs[0][walk[0]])
        for i in range(1, len(walk)):
            total += math.log(model.next_distribution(walk[:i])[walk[i]])
        return total

    def test_matches_stepwise_chain(self, model64, small_corpus):
        for row in small_corpus.walks[:10]:
            walk = row.tolist()
            lp = model64.walk_log_prob(walk)
            chain = self._chain(model64, walk)
            assert abs(lp - chain) <= 1e-9 * abs(chain)

    def test_prefix_decomposition(self, model64, small_corpus):
        walk = small_corpus.walks[0].tolist()
        lp_full = model64.walk_log_prob(walk)
        lp_prefix = model64.walk_log_prob(walk[:4])
        tail = sum(
            math.log(model64.next_distribution(walk[:i])[walk[i]]) for i in range(4, len(walk))
        )
        assert abs(lp_full - (lp_prefix + tail)) <= 1e-9 * abs(lp_full)

    def test_markov_additivity(self, small_corpus):
        model = fit_markov(small_corpus, order=1, smoothing=0.5)
        for row in small_corpus.walks[:10]:
            walk = row.tolist()
            lp = model.walk_log_prob(walk)
            chain = self._chain(model, walk)
            assert abs(lp - chain) <= 1e-9 * abs(chain)

    def test_uniform_init_log_prob(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=15)
        model, _ = train(small_corpus, config, {"lr": 1e-3, "batch": 64, "epochs": 0, "seed": 0})
        lp = model.walk_log_prob([0, 1, 2])
        assert lp == pytest.approx(3 * math.log(1 / 8), rel=0.10)


class TestGradients:
    def test_analytic_matches_finite_differences(self, small_corpus):
        """Autograd gradients of the batch cross-entropy vs central finite
        differences at float64, 150 random coordinates, 1e-3 relative."""
        config = ModelConfig(vocab=9, depth=2, width=32, heads=2, context_len=7)
        model, _ = train(
            small_corpus, config, {"lr": 1e-3, "batch": 32, "epochs": 1, "seed": 9},
            dtype=torch.float64,
        )
        net = model.net
        net.train()

        walks = torch.from_numpy(small_corpus.walks[:16].astype(np.int64))
        inputs = torch.empty_like(walks)
        inputs[:, 0] = config.start_token
        inputs[:, 1:] = walks[:, :-1]

        def loss_value():
            logits, _ = net(inputs)
            return torch.nn.functional.cross_entropy(
                logits.reshape(-1, config.vocab), walks.reshape(-1)
            )

        loss = loss_value()
        net.zero_grad()
        loss.backward()
        params = [p for p in net.parameters() if p.grad is not None]
        sizes = [p.numel() for p in params]
        total = sum(sizes)
        rng = np.random.default_rng(17)
        coords = rng.choice(total, size=150, replace=False)

        eps = 1e-6
        checked = 0
        for flat_idx in coords:
            pi, offset = 0, int(flat_idx)
            while offset >= sizes[pi]:
                offset -= sizes[pi]
                pi += 1
            param = params[pi]
            analytic = param.grad.view(-1)[offset].item()
            with torch.no_grad():
                orig = param.view(-1)[offset].item()
                param.view(-1)[offset] = orig + eps
                up = loss_value().item()
                param.view(-1)[offset] = orig - eps
                down = loss_value().item()
                param.view(-1)[offset] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(analytic), abs(numeric), 1e-8)
            assert abs(analytic - numeric) / denom <= 1e-3, (
                f"coordinate {flat_idx}: analytic {analytic:.3e} vs numeric {numeric:.3e}"
            )
            checked += 1
        assert checked >= 100


class TestSampling:
    def test_deterministic(self, small_corpus):
        model = fit_markov(small_corpus, order=1)
        a = sample_walks(model, [0, 1, 2, 3], 10, seed=5)
        b = sample_walks(model, [0, 1, 2, 3], 10, seed=5)
        assert (a.walks == b.walks).all()

    def test_starts_respected(self, small_corpus):
        model = fit_markov(small_corpus, order=1)
        starts = [3, 1, 4, 1, 5]
        walks = sample_walks(model, starts, 6, seed=0)
        assert walks.walks[:, 0].tolist() == starts

    def test_length_24_generation(self, small_corpus):
        config = ModelConfig(vocab=9, depth=1, width=16, heads=2, context_len=23)
        model, _ = train(small_corpus, config, {"lr": 3e-3, "batch": 64, "epochs": 1, "seed": 0})
        walks = sample_walks(model, [0] * 8, 24, seed=1)
        assert walks.walks.shape == (8, 24)
        with pytest.raises(ValueError, match="positions"):
            sample_walks(model, [0] * 2, 26, seed=1)

    def test_batching_invariant(self, small_corpus):
        model = fit_markov(small_corpus, order=1)
        a = sample_walks(model, list(range(8)), 12, seed=9, batch_size=3)
        b = sample_walks(model, list(range(8)), 12, seed=9, batch_size=512)
        assert (a.walks == b.walks).all()


class TestCheckpoint:
    def test_transformer_round_trip(self, small_corpus, tmp_path):
        config = ModelConfig(vocab=9, depth=2, width=16, heads=2, context_len=9)
        model, _ = train(small_corpus, config, {"lr": 3e-3, "batch": 64, "epochs": 1, "seed": 4})
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == "attention"
        assert loaded.config == config
        for prefix in ([0], [1, 2, 3], [4, 5]):
            assert np.array_equal(loaded.next_distribution(prefix), model.next_distribution(prefix))

    def test_markov_round_trip(self, small_corpus, tmp_path):
        model = fit_markov(small_corpus, order=2, smoothing=0.25)
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == "markov"
        assert loaded.order == 2
        for prefix in ([0], [1, 2], [3, 4, 5]):
            assert np.allclose(loaded.next_distribution(prefix), model.next_distribution(prefix))

    def test_truncated_checkpoint_rejected(self, small_corpus, tmp_path):
        model = fit_markov(small_corpus, order=1)
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_model(path)
