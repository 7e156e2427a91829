"""
Testy fuzji pamięci czasowej (TMF).
"""

import pytest
import torch

from armot.errors import ShapeError
from armot.tmf import TemporalMemoryFusion, TrackMemory, tmf_update


def test_zero_inputs_give_layer_norm_of_zero():
    torch.manual_seed(0)
    module = TemporalMemoryFusion(8, heads=2)
    module.zero_init_output()
    with torch.no_grad():
        module.norm.bias.copy_(torch.linspace(-1.0, 1.0, 8))
    zero = torch.zeros(8)
    memory = tmf_update(zero, TrackMemory(zero, True), zero, module)
    assert memory.initialized
    assert torch.allclose(memory.vector, module.norm.bias, atol=1e-6)


@torch.no_grad()
def test_single_key_closed_form():
    torch.manual_seed(5)
    module = TemporalMemoryFusion(8, heads=2).eval()
    attention = module.attention
    attention.in_proj_bias.normal_()
    attention.out_proj.bias.normal_()
    hidden, history, embed = torch.randn(8), torch.randn(8), torch.randn(8)
    memory = tmf_update(hidden, TrackMemory(history, True), embed, module)
    # jeden klucz: wagi uwagi są równe 1, zostaje W_o (W_v E + b_v) + b_o
    value = embed @ attention.in_proj_weight[16:].T + attention.in_proj_bias[16:]
    attended = value @ attention.out_proj.weight.T + attention.out_proj.bias
    expected = module.norm(hidden + history + attended)
    assert torch.allclose(memory.vector, expected, atol=1e-5)


def test_identical_tracks_identical_memories():
    torch.manual_seed(1)
    module = TemporalMemoryFusion(8, heads=2).eval()
    hidden, embed = torch.randn(8), torch.randn(8)
    history = TrackMemory(torch.randn(8), True)
    updated = module.update_many(torch.stack([hidden, hidden]), [history, history], torch.stack([embed, embed]))
    assert torch.equal(updated[0].vector, updated[1].vector)


def test_tracks_are_independent():
    torch.manual_seed(2)
    module = TemporalMemoryFusion(8, heads=2).eval()
    hidden, embed = torch.randn(3, 8), torch.randn(3, 8)
    memories = [TrackMemory(torch.randn(8), True) for _ in range(3)]
    together = module.update_many(hidden, memories, embed)
    alone = tmf_update(hidden[1], memories[1], embed[1], module)
    assert torch.allclose(together[1].vector, alone.vector, atol=1e-6)


def test_new_track_uses_hidden_as_history():
    torch.manual_seed(3)
    module = TemporalMemoryFusion(8, heads=2).eval()
    hidden, embed = torch.randn(8), torch.randn(8)
    fresh = tmf_update(hidden, TrackMemory(), embed, module)
    explicit = tmf_update(hidden, TrackMemory(hidden, True), embed, module)
    assert torch.allclose(fresh.vector, explicit.vector)


def test_shape_errors():
    with pytest.raises(ShapeError):
        TemporalMemoryFusion(10, heads=4)
    module = TemporalMemoryFusion(8, heads=2)
    with pytest.raises(ShapeError):
        module(torch.zeros(1, 8), torch.zeros(1, 8), torch.zeros(1, 6))


def test_gradcheck():
    torch.manual_seed(4)
    module = TemporalMemoryFusion(4, heads=2).double().eval()
    inputs = tuple(torch.randn(2, 4, dtype=torch.float64, requires_grad=True) for _ in range(3))
    assert torch.autograd.gradcheck(module, inputs, eps=1e-6, atol=1e-6, rtol=1e-3)
