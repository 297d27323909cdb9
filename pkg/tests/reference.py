"""Loop-based numpy references for attention layers, written against the math only."""

import numpy as np


def ref_layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def ref_attention(x, attn, mask=None, source=None):
    """Loop-over-heads attention for one (L, d) query sequence and optional (S, d) source."""
    src = x if source is None else source
    h = attn.heads
    dh = x.shape[-1] // h
    q = x @ attn.q.weight.data + attn.q.bias.data
    k = src @ attn.k.weight.data + attn.k.bias.data
    v = src @ attn.v.weight.data + attn.v.bias.data
    heads = []
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        if mask is not None:
            scores = scores + mask
        w = np.exp(scores - scores.max(-1, keepdims=True))
        w = w / w.sum(-1, keepdims=True)
        heads.append(w @ v[:, sl])
    return np.concatenate(heads, -1) @ attn.o.weight.data + attn.o.bias.data


def ref_transformer(x, transformer, mask, source=None):
    """Pre-norm blocks; with ``source`` the keys and values come from its own normalisation."""
    for block in transformer.blocks:
        src = None
        if source is not None:
            src = ref_layer_norm(source, block.source_norm.gamma.data, block.source_norm.beta.data)
        x = x + ref_attention(ref_layer_norm(x, block.norm.gamma.data, block.norm.beta.data), block.attn, mask, src)
        if block.ffn is not None:
            n = ref_layer_norm(x, block.ffn_norm.gamma.data, block.ffn_norm.beta.data)
            hid = np.maximum(n @ block.ffn.fc1.weight.data + block.ffn.fc1.bias.data, 0)
            x = x + hid @ block.ffn.fc2.weight.data + block.ffn.fc2.bias.data
    return x
