import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from fedsim import secagg as S
from fedsim.errors import EncodingRangeError, ProtocolError, ShapeError
from fedsim.federation import merge_models
from fedsim.nn import Layer, Model, SOFTMAX, flatten, init_model

from helpers import random_model

TWO64 = 1 << 64


def scalar(w):
    return Model((Layer(np.array([[float(w)]]), np.array([0.0]), SOFTMAX),))


def secure_mean(models, seed=0, round_index=1, frac_bits=24):
    seeds = S.deal_pairwise_seeds(len(models), seed)
    updates = [S.client_update(m, i, seeds, round_index, frac_bits) for i, m in enumerate(models)]
    return S.decode_sum(S.aggregate_masked(updates, len(models)), len(models), frac_bits, like=models[0])


class TestEncode:
    def test_zero(self):
        assert S.encode_vector([0.0]).tolist() == [0]

    def test_one(self):
        assert S.encode_vector([1.0], 24).tolist() == [16777216]

    def test_negative_half(self):
        # round(-0.5 * 2**24) mod 2**64, computed with Python integers
        expected = (-(2 ** 23)) % TWO64
        assert S.encode_vector([-0.5], 24).tolist() == [expected] == [TWO64 - 2 ** 23]

    def test_canonical_order(self):
        m = random_model([2, 3, 2], np.random.default_rng(0))
        enc = S.encode_fixed(m, 24)
        np.testing.assert_array_equal(enc.values, S.encode_vector(flatten(m), 24))
        assert enc.length == m.n_params

    def test_overflow_names_index(self):
        with pytest.raises(EncodingRangeError) as err:
            S.encode_vector([0.0, 1.0, 2.0 ** 40], 24)
        assert err.value.index == 2

    def test_nan_rejected(self):
        with pytest.raises(EncodingRangeError):
            S.encode_vector([np.nan], 24)


class TestDecode:
    def test_round_trip_single(self):
        m = random_model([3, 4, 2], np.random.default_rng(1))
        back = S.decode_sum(S.encode_fixed(m), 1)
        assert np.max(np.abs(flatten(back) - flatten(m))) <= 2.0 ** -25

    def test_scalar_mean(self):
        total = sum(S.encode_vector([v], 24) for v in (1.5, -0.5, 2.0))
        assert abs(S.decode_vector(total, 3, 24)[0] - 1.0) <= 3 * 2.0 ** -25

    def test_all_zero(self):
        m = init_model([3, 2], 0)
        zero = m.with_params([(np.zeros_like(w), np.zeros_like(b)) for w, b in m.params()])
        out = S.decode_sum(S.encode_fixed(zero), 4)
        assert np.all(flatten(out) == 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            S.decode_sum(S.FixedPointVector(np.zeros(3, dtype=np.uint64)), 1, like=init_model([3, 2], 0))


class TestMasks:
    def test_two_client_antisymmetry(self):
        seeds = S.deal_pairwise_seeds(2, 5)
        m0, m1 = S.gen_masks(0, seeds, 1, 16), S.gen_masks(1, seeds, 1, 16)
        assert [int(v) for v in m0] == [(-int(v)) % TWO64 for v in m1]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 12), st.integers(0, 2**31), st.integers(0, 1000), st.integers(1, 50))
    def test_masks_cancel(self, t, seed, rnd, length):
        seeds = S.deal_pairwise_seeds(t, seed)
        ring = np.zeros(length, dtype=np.uint64)
        for i in range(t):
            ring += S.gen_masks(i, seeds, rnd, length)
        assert not ring.any()

    def test_deterministic_and_round_dependent(self):
        seeds = S.deal_pairwise_seeds(3, 9)
        a, b = S.gen_masks(1, seeds, 4, 32), S.gen_masks(1, seeds, 4, 32)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, S.gen_masks(1, seeds, 5, 32))

    def test_round_separation(self):
        seeds = S.deal_pairwise_seeds(4, 1)
        for cid in range(4):
            for r in range(20):
                a, b = S.gen_masks(cid, seeds, r, 64), S.gen_masks(cid, seeds, r + 1, 64)
                assert not np.array_equal(a[:4], b[:4])

    def test_missing_peer(self):
        seeds = S.deal_pairwise_seeds(3, 0)
        broken = S.PairwiseSeeds(3, {k: v for k, v in seeds.seeds.items() if k != (0, 2)})
        with pytest.raises(ProtocolError):
            S.gen_masks(0, broken, 1, 4)

    def test_seed_table(self):
        seeds = S.deal_pairwise_seeds(6, 3)
        assert len(seeds.seeds) == 15 and len(set(seeds.seeds.values())) == 15
        assert seeds.seed(4, 1) == seeds.seed(1, 4)
        assert seeds.next_round().round_nonce == seeds.round_nonce + 1

    def test_unseeded_dealing_is_fresh(self):
        assert S.deal_pairwise_seeds(3).seeds != S.deal_pairwise_seeds(3).seeds


class TestMaskUpdate:
    def test_zero_mask(self):
        enc = S.encode_fixed(init_model([3, 2], 0))
        out = S.mask_update(enc, np.zeros(enc.length, dtype=np.uint64))
        np.testing.assert_array_equal(out.masked.values, enc.values)

    def test_unmask(self):
        enc = S.encode_fixed(init_model([3, 2], 0))
        mask = S.prg_stream(123, 0, enc.length)
        out = S.mask_update(enc, mask, client_id=2, round_index=7)
        np.testing.assert_array_equal(out.masked.values - mask, enc.values)
        assert out.client_id == 2 and out.round == 7

    def test_length_mismatch(self):
        enc = S.encode_fixed(init_model([3, 2], 0))
        with pytest.raises(ShapeError):
            S.mask_update(enc, np.zeros(3, dtype=np.uint64))

    def test_top_byte_uniformity(self):
        # one fixed coordinate of client 0's update over 10**4 independent seed tables
        enc = S.encode_vector([0.75, -3.0, 0.0], 24)
        coord = 1
        tops = np.empty(10_000, dtype=np.int64)
        for trial in range(10_000):
            seeds = S.deal_pairwise_seeds(2, trial)
            masked = S.mask_update(S.FixedPointVector(enc), S.gen_masks(0, seeds, 1, 3))
            tops[trial] = int(masked.masked.values[coord]) >> 56
        counts = np.bincount(tops, minlength=256)
        assert chisquare(counts).pvalue > 0.001


class TestWireFormat:
    def test_round_trip(self):
        seeds = S.deal_pairwise_seeds(3, 0)
        upd = S.client_update(init_model([4, 3], 1), 2, seeds, 5)
        back = S.MaskedUpdate.from_bytes(upd.to_bytes())
        assert (back.client_id, back.round, back.prg_id, back.masked.frac_bits) == (2, 5, S.PRG_ID, 24)
        np.testing.assert_array_equal(back.masked.values, upd.masked.values)

    def test_layout(self):
        vals = np.array([1, 2**64 - 1], dtype=np.uint64)
        blob = S.MaskedUpdate(3, 9, S.FixedPointVector(vals, 20)).to_bytes()
        prg = S.PRG_ID.encode()
        header = b"FSMU" + (1).to_bytes(2, "little") + (9).to_bytes(8, "little") + (3).to_bytes(4, "little") \
            + (2).to_bytes(8, "little") + bytes([20]) + len(prg).to_bytes(2, "little")
        assert blob == header + prg + (1).to_bytes(8, "little") + (2**64 - 1).to_bytes(8, "little")

    def test_truncated(self):
        blob = S.client_update(init_model([4, 3], 1), 0, S.deal_pairwise_seeds(2, 0), 1).to_bytes()
        with pytest.raises(ProtocolError):
            S.MaskedUpdate.from_bytes(blob[:-1])
        with pytest.raises(ProtocolError):
            S.MaskedUpdate.from_bytes(b"XXXX" + blob[4:])


class TestAggregate:
    def test_matches_plaintext_merge(self):
        rng = np.random.default_rng(2)
        models = [random_model([4, 5, 3], rng) for _ in range(5)]
        secure = secure_mean(models)
        plain = merge_models(models)
        assert np.max(np.abs(flatten(secure) - flatten(plain))) <= 5 * 2.0 ** -25

    def test_opposite_values(self):
        out = secure_mean([scalar(0.625), scalar(-0.625)])
        assert out.layers[0].weights[0, 0] == 0.0

    def test_missing_client(self):
        seeds = S.deal_pairwise_seeds(3, 0)
        models = [scalar(1.0)] * 3
        updates = [S.client_update(m, i, seeds, 1) for i, m in enumerate(models)]
        with pytest.raises(ProtocolError):
            S.aggregate_masked(updates[:2], 3)

    def test_duplicate_client(self):
        seeds = S.deal_pairwise_seeds(2, 0)
        u = S.client_update(scalar(1.0), 0, seeds, 1)
        with pytest.raises(ProtocolError):
            S.aggregate_masked([u, u], 2)

    def test_round_mismatch(self):
        seeds = S.deal_pairwise_seeds(2, 0)
        a = S.client_update(scalar(1.0), 0, seeds, 1)
        b = S.client_update(scalar(1.0), 1, seeds, 2)
        with pytest.raises(ProtocolError):
            S.aggregate_masked([a, b], 2)

    def test_individual_update_hides_model(self):
        seeds = S.deal_pairwise_seeds(3, 0)
        m = scalar(1.0)
        upd = S.client_update(m, 0, seeds, 1)
        assert int(upd.masked.values[0]) != int(S.encode_fixed(m).values[0])
