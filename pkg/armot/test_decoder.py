"""
Testy dekodera przyczynowego, wyboru z ograniczeniem i punktów kontrolnych.
"""

import math

import pytest
import torch

from armot.core import IDVocabulary
from armot.decoder import (
    CausalDecoder, DecoderConfig, causal_mask, constrained_argmax, load_checkpoint, predict_id, save_checkpoint,
)
from armot.errors import CheckpointError, ConfigError, SequenceTooLongError
from armot.sequence import ContinuousSlot, DiscreteSlot, TokenSequence

K = 6
CONFIG = DecoderConfig(layers=2, heads=2, d_lm=8, ffn=16, max_len=32, dropout=0.0)


def _decoder(n_bin_tokens=0, seed=0):
    torch.manual_seed(seed)
    return CausalDecoder(CONFIG, IDVocabulary(K, CONFIG.d_lm), n_bin_tokens).eval()


def _sequence(length, seed=0, predict=None):
    generator = torch.Generator().manual_seed(seed)
    slots = []
    for i in range(length):
        if i % 2:
            slots.append(DiscreteSlot(i % K, "id"))
        else:
            slots.append(ContinuousSlot(torch.randn(CONFIG.d_lm, generator=generator)))
    predict = predict or [i for i in range(1, length) if i % 2]
    return TokenSequence(slots, predict)


def test_causal_mask_shape():
    mask = causal_mask(3)
    assert mask.tolist() == [[False, True, True], [False, False, True], [False, False, False]]


@torch.no_grad()
def test_suffix_perturbation_keeps_prefix_exact():
    decoder = _decoder()
    seq = _sequence(12)
    perturbed = _sequence(12, seed=1)
    perturbed.slots[:7] = seq.slots[:7]
    first, second = decoder(seq), decoder(perturbed)
    assert torch.equal(first.hidden[:7], second.hidden[:7])
    assert not torch.equal(first.hidden[8:], second.hidden[8:])


@torch.no_grad()
def test_logits_read_one_before_predict_position():
    decoder = _decoder()
    seq = _sequence(9, predict=[3, 7])
    output = decoder(seq)
    assert output.logits.shape == (2, K + 1)
    expected = decoder.logits_from_hidden(output.hidden[[2, 6]])
    assert torch.allclose(output.logits, expected)


@torch.no_grad()
def test_single_slot_sequence():
    output = _decoder()(TokenSequence([ContinuousSlot(torch.ones(CONFIG.d_lm))], [1]))
    assert output.logits.shape == (1, K + 1)
    assert output.hidden.shape == (1, CONFIG.d_lm)


def _layer_norm(x, norm):
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + norm.eps) * norm.weight + norm.bias


@torch.no_grad()
def test_tiny_decoder_matches_manual_arithmetic():
    config = DecoderConfig(layers=1, heads=1, d_lm=4, ffn=6, max_len=8, dropout=0.0)
    decoder = CausalDecoder(config, IDVocabulary(2, 4)).double().eval()
    for k, (_, param) in enumerate(sorted(decoder.named_parameters())):
        values = torch.arange(param.numel(), dtype=torch.float64)
        param.copy_((0.5 * torch.sin(0.7 * values + k)).reshape(param.shape))
    v0 = torch.tensor([0.3, -0.2, 0.5, 0.1], dtype=torch.float64)
    v1 = torch.tensor([-0.4, 0.6, 0.0, 0.2], dtype=torch.float64)
    output = decoder(TokenSequence([ContinuousSlot(v0), DiscreteSlot(1), ContinuousSlot(v1)], [1, 3]))

    layer, attention = decoder.layers[0], decoder.layers[0].self_attn
    x = torch.stack([v0, decoder.vocab.embedding.weight[1], v1]) + decoder.positions.weight[:3]
    h = _layer_norm(x, layer.norm1)
    w_q, w_k, w_v = attention.in_proj_weight.chunk(3)
    b_q, b_k, b_v = attention.in_proj_bias.chunk(3)
    q, k, v = h @ w_q.T + b_q, h @ w_k.T + b_k, h @ w_v.T + b_v
    scores = (q @ k.T / math.sqrt(4)).masked_fill(torch.triu(torch.ones(3, 3, dtype=torch.bool), 1), -math.inf)
    x = x + (torch.softmax(scores, dim=-1) @ v) @ attention.out_proj.weight.T + attention.out_proj.bias
    h = _layer_norm(x, layer.norm2) @ layer.linear1.weight.T + layer.linear1.bias
    x = x + (0.5 * h * (1 + torch.erf(h / math.sqrt(2)))) @ layer.linear2.weight.T + layer.linear2.bias
    hidden = _layer_norm(x, decoder.norm)

    assert output.logits.shape == (2, 3)
    assert torch.allclose(output.hidden, hidden, atol=1e-5)
    assert torch.allclose(output.logits, hidden[[0, 2]] @ decoder.vocab.embedding.weight.T, atol=1e-5)


@torch.no_grad()
def test_batch_matches_single_sequences():
    decoder = _decoder()
    seqs = [_sequence(5, seed=0), _sequence(11, seed=1)]
    for seq, target in zip(seqs, ([1, 2], [0, 1, 2, 3, 4])):
        seq.target_ids = target
    logits, targets, _ = decoder.forward_batch(seqs)
    single = torch.cat([decoder(s).logits for s in seqs])
    assert torch.allclose(logits, single, atol=1e-5)
    assert targets.tolist() == [1, 2, 0, 1, 2, 3, 4]


def test_constrained_argmax():
    logits = torch.tensor([5.0, 1.0, 3.0])
    index, prob = constrained_argmax(logits, {1, 2})
    assert index == 2
    assert prob == pytest.approx(math.exp(3) / (math.exp(1) + math.exp(3)))
    with pytest.raises(ConfigError):
        constrained_argmax(logits, set())


@pytest.mark.parametrize("allowed", [{K}, {0, K}, {1, 3, K}, set(range(K + 1))])
def test_uniform_logits_split_confidence_evenly(allowed):
    index, confidence = constrained_argmax(torch.zeros(K + 1), allowed)
    assert index in allowed
    assert confidence == pytest.approx(1 / len(allowed), abs=1e-15)


@torch.no_grad()
def test_predict_id_respects_constraint():
    decoder = _decoder()
    seq = _sequence(4, predict=[4])
    for allowed in ({0}, {K}, {2, 3}):
        index, confidence, _ = predict_id(decoder, seq, allowed)
        assert index in allowed
        assert 0.0 < confidence <= 1.0


def test_sequence_too_long():
    with pytest.raises(SequenceTooLongError):
        _decoder()(_sequence(CONFIG.max_len + 2))


def test_bin_tokens_need_bin_table():
    seq = TokenSequence([DiscreteSlot(K + 1, "bin"), DiscreteSlot(0, "id")], [1])
    with pytest.raises(ConfigError):
        _decoder()(seq)
    assert _decoder(n_bin_tokens=10)(seq).logits.shape == (1, K + 1)


def test_output_head_is_tied_to_vocabulary():
    decoder = _decoder()
    assert decoder.vocab.output_weight() is decoder.vocab.embedding.weight


def test_decoder_gradcheck():
    torch.manual_seed(5)
    config = DecoderConfig(layers=1, heads=2, d_lm=4, ffn=8, max_len=8, dropout=0.0)
    decoder = CausalDecoder(config, IDVocabulary(3, 4)).double().eval()
    x = torch.randn(1, 5, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(decoder.run, (x,), eps=1e-6, atol=1e-6, rtol=1e-3)


def test_checkpoint_round_trip(tmp_path):
    decoder = _decoder()
    save_checkpoint(tmp_path / "model.pt", {"layers": 2}, decoder.state_dict())
    header, state = load_checkpoint(tmp_path / "model.pt")
    assert header == {"layers": 2}
    restored = _decoder(seed=1)
    restored.load_state_dict(state)
    seq = _sequence(6)
    with torch.no_grad():
        assert torch.equal(decoder(seq).logits, restored(seq).logits)
    assert not (tmp_path / "model.pt.tmp").exists()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError, match="checkpoint not found"):
        load_checkpoint(tmp_path / "missing.pt")


def test_foreign_checkpoint(tmp_path):
    torch.save({"magic": "OTHER", "version": 1}, tmp_path / "other.pt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "other.pt")
    torch.save({"magic": "ARMOT", "version": 99, "header": {}, "state_dict": {}}, tmp_path / "future.pt")
    with pytest.raises(CheckpointError, match="99"):
        load_checkpoint(tmp_path / "future.pt")
