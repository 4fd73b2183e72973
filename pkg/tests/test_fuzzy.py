import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from pokforge.bitcore import BitString, make_rng, random_bits
from pokforge.codes import BCH15, Hamming74, RepetitionCode, code_from_descriptor, get_code
from pokforge.errors import DomainError, FormatError, LengthError
from pokforge.fuzzy import (HelperData, decode, draw_seed, encode, fe_gen, fe_rep, pa_hash, rec,
                            ss_gen, toeplitz_seed_ok)


def toeplitz_oracle(W, s, out_len):
    """Build T explicitly, T[i][j] = s[i - j + n - 1], and multiply over GF(2)."""
    n = len(W)
    if out_len == 0:
        return BitString()
    T = np.array([[s.bits[i - j + n - 1] for j in range(n)] for i in range(out_len)], dtype=int)
    return BitString((T @ W.bits.astype(int)) % 2)


def all_words(n):
    return [BitString(bits) for bits in itertools.product((0, 1), repeat=n)]


def error_patterns(n, max_weight):
    for w in range(max_weight + 1):
        for pos in itertools.combinations(range(n), w):
            e = np.zeros(n, dtype=np.uint8)
            e[list(pos)] = 1
            yield e


class TestCodes:
    def test_repetition_examples(self):
        rep3 = get_code("rep3")
        assert encode(rep3, BitString("1")) == BitString("111")
        assert decode(rep3, BitString("101")) == BitString("1")
        assert (rep3.n, rep3.k, rep3.t) == (3, 1, 1)

    @pytest.mark.parametrize("name", ["rep3", "rep5", "rep7", "hamming74", "bch15_7", "bch15_5"])
    def test_corrects_up_to_t(self, name):
        code = get_code(name)
        msgs = all_words(code.k) if code.k <= 7 else None
        for m in msgs:
            c = encode(code, m).bits
            for e in error_patterns(code.n, code.t):
                assert decode(code, BitString(c ^ e)) == m

    def test_hamming_exhaustive_single_errors(self):
        code = Hamming74()
        count = 0
        for m in all_words(4):
            c = encode(code, m).bits
            for pos in range(7):
                e = np.zeros(7, dtype=np.uint8)
                e[pos] = 1
                assert decode(code, BitString(c ^ e)) == m
                count += 1
        assert count == 16 * 7
        # plus the error-free word: 16 * 8 cases in total
        assert all(decode(code, encode(code, m)) == m for m in all_words(4))

    def test_hamming_minimum_distance(self):
        code = Hamming74()
        words = [encode(code, m) for m in all_words(4)]
        dmin = min((a ^ b).popcount() for a, b in itertools.combinations(words, 2))
        assert dmin == 3

    def test_bch_generator_divides(self):
        # every codeword of the cyclic code is a multiple of g(x); check through the parity matrix
        for k in (7, 5):
            code = BCH15(k)
            assert not ((code.G.astype(int) @ code.H.T.astype(int)) % 2).any()
            dmin = min(encode(code, m).popcount() for m in all_words(k) if m.popcount())
            assert dmin >= 2 * code.t + 1

    @settings(max_examples=50)
    @given(st.sampled_from(["rep3", "rep5", "hamming74", "bch15_7"]), st.integers(1, 6), st.data())
    def test_linearity(self, name, blocks, data):
        code = get_code(name)
        n = code.k * blocks
        a = BitString(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
        b = BitString(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
        assert encode(code, a ^ b) == encode(code, a) ^ encode(code, b)
        assert decode(code, encode(code, a)) == a

    def test_length_errors(self):
        with pytest.raises(LengthError):
            encode(get_code("hamming74"), BitString("101"))
        with pytest.raises(LengthError):
            decode(get_code("rep3"), BitString("1010"))

    def test_registry(self):
        assert get_code("REP5") == RepetitionCode(5)
        for bad in ("rep4", "rep0", "golay", "bch15_9"):
            with pytest.raises(DomainError):
                get_code(bad)
        for name in ("rep3", "hamming74", "bch15_5"):
            code = get_code(name)
            assert code_from_descriptor(*code.descriptor()) == code
        with pytest.raises(DomainError):
            code_from_descriptor(0x02, 7, 4, 2)


class TestSketch:
    def test_examples(self):
        rep3 = get_code("rep3")
        assert ss_gen(rep3, BitString("110"), BitString("1")) == BitString("001")
        assert rec(rep3, BitString("100"), BitString("001")) == BitString("110")
        x = BitString("1011")
        W = encode(rep3, x)
        assert ss_gen(rep3, W, x) == BitString.zeros(12)

    @given(st.lists(st.integers(0, 1), min_size=16, max_size=16), st.lists(st.integers(0, 1), min_size=28, max_size=28))
    def test_offset_identity(self, x, w):
        code = get_code("hamming74")
        x, W = BitString(x), BitString(w)
        assert ss_gen(code, W, x) ^ W == encode(code, x)

    def test_rep5_exhaustive_recovery(self):
        code = get_code("rep5")
        rng = make_rng(17)
        W = random_bits(20, 0.5, rng)
        h = ss_gen(code, W, rng=rng)
        per_block = list(error_patterns(5, 2))
        for combo in itertools.product(per_block, repeat=4):
            assert rec(code, W ^ BitString(np.concatenate(combo)), h) == W

    def test_errors(self):
        rep3 = get_code("rep3")
        with pytest.raises(LengthError):
            ss_gen(rep3, BitString("1100"), BitString("1"))
        with pytest.raises(LengthError):
            ss_gen(rep3, BitString("110"), BitString("10"))
        with pytest.raises(LengthError):
            rec(rep3, BitString("110"), BitString("110110"))
        with pytest.raises(ValueError):
            ss_gen(rep3, BitString("110"))


class TestToeplitz:
    def test_hand_example(self):
        assert pa_hash(BitString("110"), BitString("1011"), 2) == BitString("10")

    def test_zero_input_gives_zero(self):
        s = random_bits(40, 0.5, make_rng(1))
        assert pa_hash(BitString.zeros(33), s, 8) == BitString.zeros(8)

    def test_matches_scipy_toeplitz(self):
        rng = make_rng(2)
        n, m = 37, 11
        W = random_bits(n, 0.5, rng)
        s = random_bits(m + n - 1, 0.5, rng)
        # first column s[n-1:], first row s[n-1::-1]
        T = scipy.linalg.toeplitz(s.bits[n - 1:], s.bits[n - 1::-1]).astype(int)
        assert pa_hash(W, s, m) == BitString((T @ W.bits) % 2)

    @settings(max_examples=100)
    @given(st.integers(1, 24), st.integers(0, 12), st.data())
    def test_matches_oracle_and_is_linear(self, n, m, data):
        bits = st.lists(st.integers(0, 1), min_size=n, max_size=n)
        W1, W2 = BitString(data.draw(bits)), BitString(data.draw(bits))
        s = BitString(data.draw(st.lists(st.integers(0, 1), min_size=m + n - 1, max_size=m + n - 1))) if m else BitString()
        k1 = pa_hash(W1, s, m)
        assert k1 == toeplitz_oracle(W1, s, m)
        assert pa_hash(W1 ^ W2, s, m) == k1 ^ pa_hash(W2, s, m)

    def test_seed_length_checked(self):
        with pytest.raises(LengthError):
            pa_hash(BitString("110"), BitString("101"), 2)

    def test_zero_row_seeds_rejected(self):
        # row 0 reads s[0:3]; all zero there makes output bit 0 constant
        assert not toeplitz_seed_ok(BitString("000111"), 3, 4)
        assert toeplitz_seed_ok(BitString("100100"), 3, 4)
        rng = make_rng(4)
        for _ in range(200):
            assert toeplitz_seed_ok(draw_seed(4, 16, rng), 4, 16)

    def test_output_bits_unbiased(self):
        rng = make_rng(5)
        n, m, trials = 32, 8, 10_000
        s = draw_seed(n, m, rng)
        W = rng.random((trials, n)) < 0.5
        T = np.array([[s.bits[i - j + n - 1] for j in range(n)] for i in range(m)], dtype=int)
        out = (W.astype(int) @ T.T) % 2
        sigma = np.sqrt(0.25 / trials)
        assert np.all(np.abs(out.mean(axis=0) - 0.5) <= 4 * sigma)


class TestExtractor:
    def test_round_trip_all_correctable_patterns(self):
        # every 1-per-block pattern on a spread of 12-bit words; the full sweep is an acceptance check
        code = get_code("rep3")
        per_block = list(error_patterns(3, 1))
        errors = [BitString(np.concatenate(c)) for c in itertools.product(per_block, repeat=4)]
        assert len(errors) == 256
        failures = 0
        for i, W in enumerate(all_words(12)[::37]):
            hd, key = fe_gen(code, W, 6, make_rng(i))
            failures += sum(fe_rep(code, W ^ e, hd) != key for e in errors)
        assert failures == 0

    def test_beyond_radius_changes_key(self):
        code = get_code("rep3")
        rng = make_rng(8)
        W = random_bits(30, 0.5, rng)
        hd, key = fe_gen(code, W, 16, rng)
        found = False
        for pos in itertools.combinations(range(3), 2):
            e = np.zeros(30, dtype=np.uint8)
            e[list(pos)] = 1
            found |= fe_rep(code, W ^ BitString(e), hd) != key
        assert found

    def test_deterministic_and_empty_key(self):
        code = get_code("hamming74")
        W = random_bits(28, 0.5, make_rng(3))
        a = fe_gen(code, W, 10, make_rng(77))
        b = fe_gen(code, W, 10, make_rng(77))
        assert a == b
        hd, key = fe_gen(code, W, 0, make_rng(1))
        assert len(key.k) == 0 and len(hd.s) == 0
        assert fe_rep(None, W, hd) == key

    def test_litho_read_round_trip(self):
        from pokforge.litho import YieldSurface, fabricate_array, read_bits
        code = get_code("rep3")
        W = read_bits(fabricate_array(YieldSurface(), 4, 6, 460, 52, seed=2))
        hd, key = fe_gen(code, W, 8, make_rng(9))
        rng = make_rng(10)
        for _ in range(50):
            flips = np.zeros(24, dtype=np.uint8)
            flips[np.arange(8) * 3 + rng.integers(0, 3, 8)] = 1
            assert fe_rep(code, W ^ BitString(flips), hd) == key

    def test_errors(self):
        code = get_code("rep3")
        with pytest.raises(LengthError):
            fe_gen(code, BitString("1101"), 2, make_rng(0))
        hd, _ = fe_gen(code, BitString("110110"), 2, make_rng(0))
        with pytest.raises(LengthError):
            fe_rep(code, BitString("110"), hd)
        with pytest.raises(LengthError):
            fe_rep(get_code("rep5"), BitString("110110"), hd)

    def test_key_repr_hides_bits(self):
        _, key = fe_gen(get_code("rep3"), BitString("111000"), 4, make_rng(0))
        assert str(key.k) not in repr(key)


class TestHelperFormat:
    def test_layout(self):
        code = get_code("rep3")
        hd = HelperData(code=code, block_count=1, h=BitString("001"), s=BitString("1011"), pa_output_len=2)
        data = hd.to_bytes()
        assert data[:4] == b"POKH" and data[4] == 0x01 and data[5] == 0x01
        assert data[6:12] == bytes([0, 3, 0, 1, 0, 1])
        assert data[12:16] == (1).to_bytes(4, "big") and data[16:20] == (2).to_bytes(4, "big")
        assert data[20:25] == b"\x00\x00\x00\x04\xb0"
        assert data[25:30] == b"\x00\x00\x00\x03\x20"
        import zlib
        assert data[30:] == zlib.crc32(data[:30]).to_bytes(4, "big")
        assert len(data) == 34

    @pytest.mark.parametrize("name,n_bits,out_len", [("rep3", 30, 8), ("hamming74", 56, 20), ("bch15_5", 45, 0)])
    def test_round_trip(self, name, n_bits, out_len):
        W = random_bits(n_bits, 0.5, make_rng(1))
        hd, _ = fe_gen(get_code(name), W, out_len, make_rng(2))
        data = hd.to_bytes()
        back = HelperData.from_bytes(data)
        assert back == hd and back.to_bytes() == data

    def test_corruption_detected(self):
        hd, _ = fe_gen(get_code("rep3"), BitString("110110"), 2, make_rng(0))
        data = bytearray(hd.to_bytes())
        for i in (0, 4, 5, 21, len(data) - 1):
            bad = bytearray(data)
            bad[i] ^= 0x01
            with pytest.raises(FormatError):
                HelperData.from_bytes(bytes(bad))
        with pytest.raises(FormatError):
            HelperData.from_bytes(bytes(data[:-2]))
        with pytest.raises(FormatError):
            HelperData.from_bytes(bytes(data) + b"\x00")

    def test_inconsistent_fields(self):
        with pytest.raises(LengthError):
            HelperData(code=get_code("rep3"), block_count=2, h=BitString("001"), s=BitString(), pa_output_len=0)
