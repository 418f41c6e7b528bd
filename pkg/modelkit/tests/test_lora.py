import torch

from modelkit.lora import LoRALinear, apply_lora, merge_adapters, trainable_parameters


def forward_logits(model, vocab_size):
    model.eval()  # dropout off: forwards must be comparable
    ids = torch.tensor([[5, 6, 7, 8]])
    mask = torch.ones_like(ids)
    dec = torch.tensor([[0]])
    with torch.no_grad():
        return model(input_ids=ids, attention_mask=mask, decoder_input_ids=dec).logits


def test_apply_wraps_all_query_value_projections(backbone, tokenizer):
    # 2 encoder self-attn + 2 decoder self-attn + 2 decoder cross-attn blocks.
    wrapped = apply_lora(backbone, rank=8, alpha=16)
    assert wrapped == 12
    assert all(not p.requires_grad for p in backbone.shared.parameters())
    trainable = trainable_parameters(backbone)
    assert trainable
    assert all(p.shape[0] == 8 or p.shape[1] == 8 for p in trainable)


def test_adapters_start_at_identity(backbone, tokenizer):
    vocab = tokenizer.get_vocab_size()
    before = forward_logits(backbone, vocab)
    apply_lora(backbone, rank=4, alpha=16)
    after = forward_logits(backbone, vocab)
    assert torch.allclose(before, after)  # B starts at zero


def test_merge_reproduces_adapted_forward(backbone, tokenizer):
    vocab = tokenizer.get_vocab_size()
    apply_lora(backbone, rank=4, alpha=8)
    # Give the adapters nonzero weights.
    torch.manual_seed(3)
    for module in backbone.modules():
        if isinstance(module, LoRALinear):
            torch.nn.init.normal_(module.lora_b, std=0.05)
    adapted = forward_logits(backbone, vocab)
    merged_count = merge_adapters(backbone)
    assert merged_count == 12
    merged = forward_logits(backbone, vocab)
    assert torch.allclose(adapted, merged, atol=1e-5)
    assert not any(isinstance(m, LoRALinear) for m in backbone.modules())
