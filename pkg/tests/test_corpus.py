import math

import numpy as np
import pytest

from glyphrec.corpus import (GlyphAlphabet, LengthDistribution, build_corpus,
                             length_sampler, read_manifest, read_pgm,
                             render_sample, write_pgm)


class TestAlphabet:
    def test_glyphs_pairwise_distinct(self, alphabet):
        flat = {alphabet.glyphs[i].tobytes() for i in range(alphabet.n_symbols)}
        assert len(flat) == alphabet.n_symbols

    def test_class_layout(self, alphabet):
        assert alphabet.eos_id == alphabet.n_symbols
        assert alphabet.num_classes == alphabet.n_symbols + 1

    def test_roundtrip(self, alphabet, tmp_path):
        path = tmp_path / "alphabet.json"
        alphabet.save(str(path))
        loaded = GlyphAlphabet.load(str(path))
        np.testing.assert_array_equal(loaded.glyphs, alphabet.glyphs)

    def test_duplicate_glyphs_rejected(self):
        g = np.zeros((2, 8, 8), dtype=np.uint8)
        g[:, 0, 0] = 1
        with pytest.raises(ValueError):
            GlyphAlphabet(glyphs=g, master_seed=0)


class TestRenderSample:
    def test_deterministic(self, alphabet):
        a = render_sample([3], alphabet, rng_seed=7)
        b = render_sample([3], alphabet, rng_seed=7)
        assert a.valid_width == b.valid_width
        np.testing.assert_array_equal(a.image, b.image)

    def test_single_glyph_width(self, alphabet):
        s = render_sample([3], alphabet, rng_seed=7)
        # one glyph plus margins, upscaled 2x
        assert s.valid_width == 2 * (8 + 2 * 2)
        assert s.image.shape == (32, s.valid_width)
        assert 0.0 <= s.image.min() and s.image.max() <= 1.0

    def test_empty_label_rejected(self, alphabet):
        with pytest.raises(ValueError, match="empty label"):
            render_sample([], alphabet, rng_seed=0)

    def test_unknown_symbol_rejected(self, alphabet):
        with pytest.raises(ValueError, match="unknown symbol id 99"):
            render_sample([1, 99], alphabet, rng_seed=0)

    def test_width_strictly_grows_with_length(self, alphabet):
        w1 = render_sample([1], alphabet, rng_seed=0).valid_width
        w2 = render_sample([1, 1], alphabet, rng_seed=0).valid_width
        assert w2 > w1

    def test_width_monotone_in_length(self, alphabet):
        for seed in range(5):
            widths = [render_sample([2] * n, alphabet, seed).valid_width
                      for n in range(1, 10)]
            assert widths == sorted(widths)
            assert len(set(widths)) == len(widths)

    def test_single_glyph_separability(self, alphabet):
        images = [render_sample([s], alphabet, rng_seed=11).image
                  for s in range(alphabet.n_symbols)]
        for i in range(len(images)):
            for j in range(i + 1, len(images)):
                assert np.abs(images[i] - images[j]).max() > 0


class TestLengthSampler:
    def test_degenerate_range(self):
        dist = LengthDistribution("uniform", 5, 5)
        rng = np.random.default_rng(0)
        assert all(length_sampler(dist, rng) == 5 for _ in range(20))

    def test_uniform_frequencies(self):
        dist = LengthDistribution("uniform", 1, 4)
        rng = np.random.default_rng(1)
        draws = np.array([length_sampler(dist, rng) for _ in range(100_000)])
        for length in range(1, 5):
            freq = (draws == length).mean()
            assert abs(freq - 0.25) < 0.01

    def test_longtail_closed_form(self):
        dist = LengthDistribution("longtail", 1, 8, decay=0.7)
        probs = dist.probs()
        assert probs[0] > probs[-1]
        # geometric law: successive ratios equal the decay
        ratios = probs[1:] / probs[:-1]
        np.testing.assert_allclose(ratios, 0.7, rtol=1e-12)

    def test_bounds(self):
        dist = LengthDistribution("longtail", 2, 6)
        rng = np.random.default_rng(2)
        draws = [length_sampler(dist, rng) for _ in range(500)]
        assert min(draws) >= 2 and max(draws) <= 6

    def test_validation(self):
        with pytest.raises(ValueError):
            LengthDistribution("uniform", 0, 3)
        with pytest.raises(ValueError):
            LengthDistribution("uniform", 4, 3)
        with pytest.raises(ValueError):
            LengthDistribution("gaussian", 1, 3)


class TestBuildCorpus:
    def test_single_sample_manifest(self, alphabet, tmp_path):
        out = tmp_path / "c1"
        build_corpus(str(out), 1, LengthDistribution("uniform", 2, 2), alphabet, 0)
        rows = read_manifest(str(out))
        assert len(rows) == 1
        assert len(rows[0].label) == 2

    def test_uniform_bins_within_3_sigma(self, alphabet, tmp_path):
        out = tmp_path / "c2"
        n = 1000
        build_corpus(str(out), n, LengthDistribution("uniform", 1, 8), alphabet, 3)
        rows = read_manifest(str(out))
        counts = np.bincount([len(r.label) for r in rows], minlength=9)[1:9]
        sigma = math.sqrt(n * (1 / 8) * (7 / 8))
        assert counts.sum() == n
        for c in counts:
            assert abs(c - n / 8) <= 3 * sigma

    def test_longtail_bins_monotone(self, alphabet, tmp_path):
        out = tmp_path / "c3"
        n = 10_000
        dist = LengthDistribution("longtail", 1, 8, decay=0.7)
        build_corpus(str(out), n, dist, alphabet, 4)
        rows = read_manifest(str(out))
        counts = np.bincount([len(r.label) for r in rows], minlength=9)[1:9]
        probs = dist.probs()
        for i in range(7):
            var = n * (probs[i] * (1 - probs[i]) + probs[i + 1] * (1 - probs[i + 1]))
            assert counts[i] - counts[i + 1] > -3 * math.sqrt(var)

    def test_images_match_rerender(self, alphabet, tmp_path):
        out = tmp_path / "c4"
        build_corpus(str(out), 5, LengthDistribution("uniform", 1, 3), alphabet, 5)
        rows = read_manifest(str(out))
        for row in rows:
            img = read_pgm(str(out / row.filename))
            assert img.shape == (32, row.valid_width)

    def test_n_zero_rejected(self, alphabet, tmp_path):
        with pytest.raises(ValueError):
            build_corpus(str(tmp_path / "c5"), 0,
                         LengthDistribution("uniform", 1, 2), alphabet, 0)


class TestPgm:
    def test_roundtrip_exact(self, alphabet, tmp_path):
        s = render_sample([0, 1, 2], alphabet, rng_seed=9)
        path = tmp_path / "img.pgm"
        write_pgm(str(path), s.image)
        back = read_pgm(str(path))
        # 8-bit quantization error only
        assert np.abs(back - s.image).max() <= 0.5 / 255 + 1e-9

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n....")
        with pytest.raises(ValueError):
            read_pgm(str(path))
