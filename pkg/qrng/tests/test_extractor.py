import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from qrng.exceptions import BitFileError, ConfigurationError
from qrng.extractor import (
    BitKind,
    BitStream,
    distill,
    extract,
    pack_bits,
    raw_from_extracted,
    read_bitfile,
    running_parity,
    unpack_words,
    write_bitfile,
)


def reference_parity(bits, x0=0):
    return np.bitwise_xor.accumulate(np.concatenate([[x0], bits]).astype(np.uint8))[1:]


class BitStreamTests(SimpleTestCase):
    def test_lsb_first_packing(self):
        stream = BitStream.from_bits([1, 0, 0, 0, 0, 0, 0, 0, 0, 1])
        self.assertEqual(stream.to_bytes(), bytes([0x01, 0x02]))
        self.assertEqual(int(stream.words[0]), 0x201)
        self.assertEqual(stream.bit(9), 1)
        self.assertEqual(stream.bit(8), 0)

    def test_unpack_inverts_pack(self):
        bits = np.random.default_rng(1).integers(0, 2, 1000, dtype=np.uint8)
        np.testing.assert_array_equal(unpack_words(pack_bits(bits), bits.size), bits)

    def test_trailing_bits_must_be_zero(self):
        with self.assertRaises(ConfigurationError):
            BitStream(np.array([0b1111], dtype=np.uint64), 2)

    def test_length_must_fit(self):
        with self.assertRaises(ConfigurationError):
            BitStream(np.zeros(1, dtype=np.uint64), 65)

    def test_ones_counts_set_bits(self):
        bits = np.random.default_rng(2).integers(0, 2, 4097, dtype=np.uint8)
        self.assertEqual(BitStream.from_bits(bits).ones(), int(bits.sum()))

    def test_chunks_and_slices(self):
        bits = np.random.default_rng(3).integers(0, 2, 1000, dtype=np.uint8)
        stream = BitStream.from_bits(bits)
        np.testing.assert_array_equal(np.concatenate(list(stream.iter_chunks(128))), bits)
        np.testing.assert_array_equal(stream.slice_bits(70, 333), bits[70:333])
        with self.assertRaises(ConfigurationError):
            list(stream.iter_chunks(100))

    def test_concatenate(self):
        bits = np.random.default_rng(4).integers(0, 2, 200, dtype=np.uint8)
        joined = BitStream.concatenate([BitStream.from_bits(bits[:128]), BitStream.from_bits(bits[128:])])
        self.assertEqual(joined, BitStream.from_bits(bits))
        with self.assertRaises(ConfigurationError):
            BitStream.concatenate([BitStream.from_bits(bits[:10]), BitStream.from_bits(bits[10:])])

    def test_from_bytes_rejects_short_input(self):
        with self.assertRaises(BitFileError):
            BitStream.from_bytes(b'\x00', 9)


class ExtractionTests(SimpleTestCase):
    def test_running_parity_example(self):
        raw = BitStream.from_bits([1, 1, 0, 1, 0, 0, 1])
        self.assertEqual(extract(raw).to_bits().tolist(), [1, 0, 0, 1, 1, 1, 0])
        self.assertEqual(extract(raw, x0=1).to_bits().tolist(), [0, 1, 1, 0, 0, 0, 1])

    def test_matches_reference_across_word_and_chunk_boundaries(self):
        bits = np.random.default_rng(5).integers(0, 2, 64 * 37 + 11, dtype=np.uint8)
        raw = BitStream.from_bits(bits)
        expected = reference_parity(bits)
        for chunk_words in (1, 3, 64):
            words = running_parity(raw.words, raw.length, 0, 1, chunk_words)
            np.testing.assert_array_equal(unpack_words(words, raw.length), expected)

    def test_parallel_is_bit_exact(self):
        bits = np.random.default_rng(6).integers(0, 2, 1 << 18, dtype=np.uint8)
        raw = BitStream.from_bits(bits)
        serial = running_parity(raw.words, raw.length, 1, 1, 256)
        parallel = running_parity(raw.words, raw.length, 1, 4, 256)
        np.testing.assert_array_equal(serial, parallel)

    def test_extraction_is_invertible(self):
        bits = np.random.default_rng(7).integers(0, 2, 999, dtype=np.uint8)
        raw = BitStream.from_bits(bits)
        self.assertEqual(raw_from_extracted(extract(raw)), raw)

    def test_extract_needs_raw_bits(self):
        x = extract(BitStream.from_bits([1, 0, 1]))
        self.assertEqual(x.kind, BitKind.EXTRACTED)
        with self.assertRaises(ConfigurationError):
            extract(x)

    def test_empty_stream(self):
        self.assertEqual(extract(BitStream.from_bits([])).length, 0)

    def test_parity_of_k_raw_bits(self):
        bits = np.random.default_rng(8).integers(0, 2, 1200, dtype=np.uint8)
        x = extract(BitStream.from_bits(bits))
        z = distill(x, 4, chunk_bits=128)
        self.assertEqual(z.length, 300)
        self.assertEqual(z.kind, BitKind.DISTILLED)
        self.assertEqual(z.k, 4)
        # z_i = x_{4i} = parity of d_0..d_{4i}
        expected = reference_parity(bits)[::4]
        np.testing.assert_array_equal(z.to_bits(), expected)

    def test_distill_length_and_chunking(self):
        x = extract(BitStream.from_bits(np.random.default_rng(9).integers(0, 2, 1001, dtype=np.uint8)))
        self.assertEqual(distill(x, 3).length, 333)
        self.assertEqual(distill(x, 3, chunk_bits=64), distill(x, 3, chunk_bits=1 << 20))
        self.assertEqual(distill(x, 1).to_bits().tolist(), x.to_bits().tolist())

    def test_distill_rejects_bad_input(self):
        raw = BitStream.from_bits([1, 0])
        with self.assertRaises(ConfigurationError):
            distill(raw, 2)
        with self.assertRaises(ConfigurationError):
            distill(extract(raw), 0)


class BitFileTests(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = Path(self.directory.name) / 'bits.qrb'

    def tearDown(self):
        self.directory.cleanup()

    def test_write_then_read(self):
        bits = np.random.default_rng(10).integers(0, 2, 777, dtype=np.uint8)
        stream = BitStream.from_bits(bits, BitKind.DISTILLED, 6)
        write_bitfile(stream, self.path)
        self.assertEqual(self.path.stat().st_size, 16 + 13 * 8)
        self.assertEqual(read_bitfile(self.path), stream)

    def test_bad_magic(self):
        self.path.write_bytes(b'XXXX' + bytes(12))
        with self.assertRaises(BitFileError):
            read_bitfile(self.path)

    def test_truncated_payload(self):
        write_bitfile(BitStream.from_bits(np.ones(200, dtype=np.uint8)), self.path)
        self.path.write_bytes(self.path.read_bytes()[:-8])
        with self.assertRaises(BitFileError):
            read_bitfile(self.path)

    def test_short_header(self):
        self.path.write_bytes(b'QRNB')
        with self.assertRaises(BitFileError):
            read_bitfile(self.path)
