import itertools
import math

import numpy as np
import pytest
import torch

from glyphrec.baselines import (CTCHead, PATHead, ctc_forward_losses,
                                ctc_greedy_decode, ctc_loss)
from glyphrec.model import CTCModel, PATModel

from oracles import ctc_brute_force_loss


class TestCTCLoss:
    def test_single_char_two_columns(self):
        # p(a)=0.6, p(blank)=0.4 in both columns; alignments {aa, a-, -a}
        logits = torch.log(torch.tensor([[0.6, 0.4], [0.6, 0.4]], dtype=torch.float64))
        got = float(ctc_loss(logits, [0]))
        assert abs(got - (-math.log(0.84))) < 1e-9
        assert abs(got - 0.1744) < 1e-4

    def test_certain_path_zero_loss(self):
        logits = torch.full((3, 4), -1e4, dtype=torch.float64)
        for t, cls in enumerate([0, 1, 2]):
            logits[t, cls] = 1e4
        assert abs(float(ctc_loss(logits, [0, 1, 2]))) < 1e-9

    def test_too_few_columns_is_infinite(self):
        logits = torch.randn(2, 4, dtype=torch.float64)
        assert math.isinf(float(ctc_loss(logits, [0, 1, 2])))

    def test_repeat_needing_blank_that_cannot_fit(self):
        logits = torch.randn(2, 3, dtype=torch.float64)
        # "aa" needs at least [a, blank, a]
        assert math.isinf(float(ctc_loss(logits, [0, 0])))

    def test_matches_brute_force_random_sample(self):
        rng = np.random.default_rng(0)
        cases = []
        for k in (1, 2, 3):
            for t in range(1, 7):
                for n in (1, 2, 3):
                    if n <= t:
                        cases.append((k, t, n))
        for k, t, n in [cases[i] for i in rng.choice(len(cases), size=12, replace=False)]:
            logits = torch.tensor(rng.normal(size=(t, k + 1)), dtype=torch.float64)
            target = rng.integers(0, k, size=n).tolist()
            probs = torch.softmax(logits, dim=-1).numpy()
            want = ctc_brute_force_loss(probs, target)
            got = float(ctc_loss(logits, target))
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert abs(got - want) < 1e-9

    def test_batched_matches_single(self):
        rng = np.random.default_rng(1)
        logits = torch.tensor(rng.normal(size=(3, 5, 4)), dtype=torch.float64)
        targets = torch.tensor([[0, 1, 0], [2, 2, 0], [1, 0, 0]])
        tlens = torch.tensor([3, 2, 1])
        ilens = torch.tensor([5, 4, 2])
        lp = torch.log_softmax(logits, dim=-1)
        batched = ctc_forward_losses(lp, targets, ilens, tlens)
        for b in range(3):
            single = ctc_loss(logits[b, :int(ilens[b])], targets[b, :int(tlens[b])].tolist())
            assert abs(float(batched[b]) - float(single)) < 1e-9

    def test_gradients_flow(self):
        logits = torch.randn(6, 4, dtype=torch.float64, requires_grad=True)
        loss = ctc_loss(logits, [0, 1])
        loss.backward()
        assert torch.isfinite(logits.grad).all()


class TestGreedyDecode:
    def _logits(self, path, k1):
        out = torch.zeros(len(path), k1)
        for t, cls in enumerate(path):
            out[t, cls] = 5.0
        return out

    def test_collapse_repeats(self):
        blank = 3
        assert ctc_greedy_decode(self._logits([0, 0, blank, 0], 4)) == [0, 0]

    def test_all_blanks(self):
        assert ctc_greedy_decode(self._logits([3, 3], 4)) == []

    def test_mixed(self):
        blank = 3
        assert ctc_greedy_decode(self._logits([0, 1, 1, blank, 1], 4)) == [0, 1, 1]


class TestPAT:
    def test_structural_length_cap(self):
        torch.manual_seed(0)
        head = PATHead(8, num_symbols=5, t_max=12)
        hseq = torch.randn(2, 40, 8)
        mask = torch.ones(2, 40, dtype=torch.bool)
        _, logits = head.decode(hseq, mask)
        for b in range(2):
            assert len(head.prediction(logits[b])) <= 12

    def test_identical_queries_identical_rows(self):
        head = PATHead(8, num_symbols=5, t_max=6)
        with torch.no_grad():
            head.queries.copy_(head.queries[0].expand_as(head.queries))
        hseq = torch.randn(1, 10, 8)
        attn, logits = head.decode(hseq, torch.ones(1, 10, dtype=torch.bool))
        assert torch.allclose(attn[0], attn[0, 0].expand_as(attn[0]))
        assert torch.allclose(logits[0], logits[0, 0].expand_as(logits[0]))

    def test_attention_rows_sum_to_one(self):
        head = PATHead(8, num_symbols=5, t_max=6)
        hseq = torch.randn(3, 15, 8)
        mask = torch.ones(3, 15, dtype=torch.bool)
        mask[:, 9:] = False
        attn, _ = head.decode(hseq, mask)
        assert (attn.sum(-1) - 1).abs().max() < 1e-6
        assert attn[..., 9:].abs().max() == 0.0

    def test_prediction_truncates_at_eos(self):
        head = PATHead(8, num_symbols=3, t_max=5)
        logits = torch.full((5, 4), -5.0)
        for t, cls in enumerate([0, 2, 3, 1, 1]):
            logits[t, cls] = 5.0
        assert head.prediction(logits) == [0, 2]


class TestSharedEncoderModels:
    def test_ctc_model_shapes(self):
        torch.manual_seed(0)
        model = CTCModel(num_symbols=5, channels=16)
        images = torch.rand(2, 1, 32, 40)
        col_logits, valid_cols = model(images, torch.tensor([40, 24]))
        assert col_logits.shape == (2, 10, 6)
        assert valid_cols.tolist() == [10, 6]
        preds, _ = model.predict(images, torch.tensor([40, 24]))
        assert len(preds) == 2

    def test_pat_model_shapes(self):
        torch.manual_seed(0)
        model = PATModel(num_symbols=5, channels=16, t_max=7)
        images = torch.rand(2, 1, 32, 40)
        attn, logits = model(images, torch.tensor([40, 24]))
        assert attn.shape == (2, 7, 11)
        assert logits.shape == (2, 7, 6)

    def test_namespaces(self):
        ctc = CTCModel(num_symbols=5, channels=16)
        pat = PATModel(num_symbols=5, channels=16)
        assert {n for n in ctc.named_tensors() if not n.startswith("encoder.")} == {"ctc.w", "ctc.b"}
        pat_names = {n for n in pat.named_tensors() if not n.startswith("encoder.")}
        assert pat_names == {"pat.queries", "pat.k_w", "pat.k_b", "pat.v_w",
                             "pat.v_b", "pat.cls_w", "pat.cls_b", "pat.eos"}
