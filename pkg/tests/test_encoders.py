import numpy as np
import pytest

from bridgerec.corpus import EmbeddingTable, Paper, Repository, to_token_matrix
from bridgerec.encoders import (
    BatchNormState, ConvFilterBank, TagEncoderParams,
    batchnorm_forward, conv_backward_batch, conv_encode, conv_forward_batch,
    encode_paper, encode_repository, encode_tags, tag_fc_forward, tag_vector,
)


def conv_oracle(matrix, bank):
    """Window-by-window recomputation straight from the definitions."""
    n, k = matrix.shape
    out = []
    for h, maps in bank.windows:
        w = bank.weights[h]
        b = bank.biases[h]
        for m in range(maps):
            feature_map = []
            for i in range(n - h + 1):
                window = matrix[i: i + h].reshape(-1)
                feature_map.append(max(0.0, float(window @ w[:, m]) + b[m]))
            out.append(max(feature_map))
    return np.array(out)


@pytest.fixture
def table():
    rng = np.random.default_rng(0)
    return EmbeddingTable(
        dimension=6, entries={f"w{i}": rng.normal(size=6) for i in range(30)}
    )


def random_bank(windows, k, seed=1):
    return ConvFilterBank.create(windows, k, np.random.default_rng(seed))


class TestConvEncode:
    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        bank = random_bank(((2, 3), (3, 2)), k=5)
        for _ in range(20):
            matrix = rng.normal(size=(7, 5))
            assert conv_encode(matrix, bank) == pytest.approx(
                conv_oracle(matrix, bank), abs=1e-12
            )

    def test_feature_map_length(self):
        # n=5, h=2 gives a 4-long map; the pooled value is its max
        bank = random_bank(((2, 1),), k=3)
        rng = np.random.default_rng(3)
        matrix = rng.normal(size=(5, 3))
        h, w = 2, bank.weights[2][:, 0]
        values = [
            max(0.0, float(matrix[i: i + h].reshape(-1) @ w) + bank.biases[2][0])
            for i in range(4)
        ]
        assert len(values) == 4
        assert conv_encode(matrix, bank)[0] == pytest.approx(max(values))

    def test_zero_filters_zero_bias(self):
        bank = random_bank(((2, 4),), k=3)
        bank.weights[2][:] = 0.0
        bank.biases[2][:] = 0.0
        rng = np.random.default_rng(4)
        assert not conv_encode(rng.normal(size=(6, 3)), bank).any()

    def test_window_larger_than_matrix(self):
        bank = random_bank(((4, 2),), k=3)
        with pytest.raises(ValueError, match="window size 4"):
            conv_encode(np.zeros((3, 3)), bank)

    def test_padding_windows_are_recomputed_not_shortcut(self):
        # pooled value over the padded matrix equals the max over every
        # window response, including windows overlapping the zero padding
        rng = np.random.default_rng(5)
        bank = random_bank(((3, 4),), k=4, seed=6)
        bank.biases[3][:] = rng.normal(size=4)   # nonzero bias makes padding windows matter
        text = rng.normal(size=(4, 4))
        padded = np.vstack([text, np.zeros((6, 4))])
        assert conv_encode(padded, bank) == pytest.approx(conv_oracle(padded, bank), abs=1e-12)

    def test_determinism(self):
        bank = random_bank(((2, 3),), k=4)
        m = np.random.default_rng(8).normal(size=(5, 4))
        a = conv_encode(m, bank)
        b = conv_encode(m, bank)
        assert np.array_equal(a, b)


class TestConfiguredWidths:
    def test_paper_width_256(self):
        bank = random_bank(((2, 64), (3, 64), (5, 64), (7, 64)), k=200)
        assert bank.width == 256
        matrix = np.zeros((200, 200))
        assert conv_encode(matrix, bank).shape == (256,)

    def test_repo_width_96(self):
        bank = random_bank(((2, 64), (4, 32)), k=200)
        assert bank.width == 96
        matrix = np.zeros((50, 200))
        assert conv_encode(matrix, bank).shape == (96,)


class TestConvGradient:
    def test_filter_gradient_matches_central_differences(self):
        rng = np.random.default_rng(9)
        bank = random_bank(((2, 3), (3, 2)), k=4, seed=10)
        x = rng.normal(size=(3, 6, 4))
        head = rng.normal(size=bank.width)

        def loss():
            pooled, _ = conv_forward_batch(x, bank)
            return float((pooled @ head).sum())

        pooled, cache = conv_forward_batch(x, bank)
        grads, _ = conv_backward_batch(cache, bank, np.tile(head, (3, 1)))
        step = 1e-6
        for h, _ in bank.windows:
            for arr, got in ((bank.weights[h], grads[h][0]), (bank.biases[h], grads[h][1])):
                flat = arr.reshape(-1)
                gflat = got.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + step
                    up = loss()
                    flat[i] = orig - step
                    down = loss()
                    flat[i] = orig
                    fd = (up - down) / (2 * step)
                    denom = max(abs(fd), abs(gflat[i]), 1e-8)
                    assert abs(fd - gflat[i]) / denom < 1e-4


class TestTagEncoding:
    def test_multiword_tag_is_mean(self, table):
        vec = tag_vector("w1 w2", table)
        expected = (table.lookup("w1") + table.lookup("w2")) / 2
        assert vec == pytest.approx(expected, abs=1e-15)

    def test_sum_mode(self, table):
        vec = tag_vector("w1 w2", table, combine="sum")
        assert vec == pytest.approx(table.lookup("w1") + table.lookup("w2"), abs=1e-15)

    def test_single_word_tag(self, table):
        assert tag_vector("w3", table) == pytest.approx(table.lookup("w3"))

    def test_all_oov_tag_zero(self, table):
        assert not tag_vector("unknown words", table).any()

    def test_empty_tag_list_bias_driven(self, table):
        params = TagEncoderParams.create(6, 8, np.random.default_rng(11))
        out = encode_tags([], table, params)
        expected, _ = tag_fc_forward(np.zeros((1, 6)), params)
        assert out == pytest.approx(expected[0], abs=0)

    def test_output_width_alignment(self, table):
        params = TagEncoderParams.create(6, 96, np.random.default_rng(12))
        assert encode_tags(["w1"], table, params).shape == (96,)


class TestBatchNorm:
    def test_infer_is_deterministic_affine(self):
        bn = BatchNormState.create(4)
        bn.running_mean = np.array([1.0, 0.0, -1.0, 2.0])
        bn.running_var = np.array([1.0, 4.0, 0.25, 1.0])
        x = np.random.default_rng(13).normal(size=(5, 4))
        y1, _ = batchnorm_forward(x, bn, "infer")
        y2, _ = batchnorm_forward(x, bn, "infer")
        assert np.array_equal(y1, y2)

    def test_train_mode_returns_updated_running(self):
        bn = BatchNormState.create(3)
        x = np.random.default_rng(14).normal(size=(10, 3)) + 5.0
        _, cache = batchnorm_forward(x, bn, "train")
        new_mean, new_var = cache.new_running
        assert not np.array_equal(new_mean, bn.running_mean)
        assert (new_mean > bn.running_mean).all()   # batch mean is ~5

    def test_train_normalizes_batch(self):
        bn = BatchNormState.create(3)
        x = np.random.default_rng(15).normal(size=(50, 3)) * 3 + 1
        y, _ = batchnorm_forward(x, bn, "train")
        assert y.mean(axis=0) == pytest.approx(np.zeros(3), abs=1e-12)
        assert y.std(axis=0) == pytest.approx(np.ones(3), abs=1e-3)


class TestNodeEncoders:
    @pytest.fixture
    def pieces(self, table):
        rng = np.random.default_rng(16)
        desc_bank = ConvFilterBank.create(((2, 5), (3, 3)), 6, rng)
        tag_params = TagEncoderParams.create(6, desc_bank.width, rng)
        bn = BatchNormState.create(desc_bank.width)
        return desc_bank, tag_params, bn

    def test_fusion_is_elementwise_addition(self, table, pieces):
        desc_bank, tag_params, bn = pieces
        repo = Repository(id="r1", description_tokens=("w1", "w2", "w3"),
                          tags=("w4",), starrers=frozenset())
        got = encode_repository(repo, desc_bank, tag_params, bn, table,
                                fixed_len=5, mode="infer")
        conv = conv_encode(to_token_matrix(repo.description_tokens, table, 5), desc_bank)
        tags = encode_tags(repo.tags, table, tag_params)
        manual, _ = batchnorm_forward((conv + tags)[None, :], bn, "infer")
        assert got == pytest.approx(manual[0], abs=0)

    def test_degenerate_repo(self, table, pieces):
        desc_bank, tag_params, bn = pieces
        repo = Repository(id="r1", description_tokens=(), tags=(), starrers=frozenset())
        out = encode_repository(repo, desc_bank, tag_params, bn, table, fixed_len=5)
        assert out.shape == (desc_bank.width,)
        assert np.isfinite(out).all()

    def test_paper_encoding_width_and_determinism(self, table):
        bank = ConvFilterBank.create(((2, 4), (3, 4)), 6, np.random.default_rng(17))
        p = Paper(id="p1", title="", abstract_tokens=("w1", "w2", "w9"),
                  cited_ids=frozenset())
        a = encode_paper(p, bank, table, fixed_len=10)
        b = encode_paper(p, bank, table, fixed_len=10)
        assert a.shape == (8,)
        assert np.array_equal(a, b)

    def test_empty_abstract_bias_driven(self, table):
        bank = ConvFilterBank.create(((2, 4),), 6, np.random.default_rng(18))
        bank.biases[2][:] = np.array([0.5, -0.5, 1.0, 0.0])
        p = Paper(id="p1", title="", abstract_tokens=(), cited_ids=frozenset())
        out = encode_paper(p, bank, table, fixed_len=6)
        assert out == pytest.approx(np.maximum(bank.biases[2], 0.0))
