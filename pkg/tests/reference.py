"""Plain-numpy forward pass used as an oracle for the tape-based model.

It reads weights by name from a state dict and loops over heads explicitly,
sharing no code with the library beyond the parameter naming scheme.
"""

import math

import numpy as np


def sinusoid(n, d):
    pe = np.zeros((n, d))
    for p in range(n):
        for i in range(0, d, 2):
            angle = p / 10000 ** (i / d)
            pe[p, i] = math.sin(angle)
            if i + 1 < d:
                pe[p, i + 1] = math.cos(angle)
    return pe


def norm(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def lin(w, prefix, x):
    return x @ w[prefix + ".weight"] + w[prefix + ".bias"]


def attention(w, prefix, q, k, v, n_heads, allowed):
    """allowed: (Tq, Tk) boolean for one batch row."""
    Q, K, V = lin(w, prefix + ".query", q), lin(w, prefix + ".key", k), lin(w, prefix + ".value", v)
    d = Q.shape[-1]
    dh = d // n_heads
    heads = []
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        s = Q[:, sl] @ K[:, sl].T / math.sqrt(dh)
        s = np.where(allowed, s, -1e9)
        s = np.exp(s - s.max(-1, keepdims=True))
        s /= s.sum(-1, keepdims=True)
        heads.append(s @ V[:, sl])
    return lin(w, prefix + ".out", np.concatenate(heads, axis=-1))


def ffn(w, prefix, x):
    return lin(w, prefix + ".outer", np.maximum(lin(w, prefix + ".inner", x), 0))


def branch(w, prefix, q, feats, n_heads, allowed):
    return ffn(w, prefix + ".adapter", attention(w, prefix + ".attn", q, feats, feats, n_heads, allowed))


def forward(w, cfg, src, src_valid, tgt_in, feats=None, alpha_enc=None, alpha_dec=None):
    """Logits for a batch; ``alpha_*`` None means that stack is not fused."""
    d, H = cfg["d_model"], cfg["n_heads"]
    out = []
    for b in range(src.shape[0]):
        S, Tt = src.shape[1], tgt_in.shape[1]
        key_ok = np.broadcast_to(src_valid[b][None, :], (S, S))
        x = w["src_embed.table"][src[b]] * math.sqrt(d) + sinusoid(S, d)
        f = None
        if feats is not None:
            f = feats[b]
            if "feature_proj.weight" in w:
                f = lin(w, "feature_proj", f)
        for i in range(cfg["n_enc_layers"]):
            p = f"encoder.{i}"
            a = attention(w, p + ".self_attn", x, x, x, H, key_ok)
            if alpha_enc is not None:
                a = (1 - alpha_enc) * a + alpha_enc * branch(w, p + ".branch", x, f, H, key_ok)
            x = norm(x + a, w[p + ".norm1.gain"], w[p + ".norm1.shift"])
            x = norm(x + ffn(w, p + ".ffn", x), w[p + ".norm2.gain"], w[p + ".norm2.shift"])
        table = w["tgt_embed.table"] if "tgt_embed.table" in w else w["src_embed.table"]
        s = table[tgt_in[b]] * math.sqrt(d) + sinusoid(Tt, d)
        causal = np.tril(np.ones((Tt, Tt), dtype=bool))
        mem_ok = np.broadcast_to(src_valid[b][None, :], (Tt, S))
        for i in range(cfg["n_dec_layers"]):
            p = f"decoder.{i}"
            s = norm(s + attention(w, p + ".self_attn", s, s, s, H, causal),
                     w[p + ".norm1.gain"], w[p + ".norm1.shift"])
            c = attention(w, p + ".cross_attn", s, x, x, H, mem_ok)
            if alpha_dec is not None:
                c = (1 - alpha_dec) * c + alpha_dec * branch(w, p + ".branch", s, f, H, mem_ok)
            s = norm(s + c, w[p + ".norm2.gain"], w[p + ".norm2.shift"])
            s = norm(s + ffn(w, p + ".ffn", s), w[p + ".norm3.gain"], w[p + ".norm3.shift"])
        out.append(lin(w, "output", s))
    return np.stack(out)
