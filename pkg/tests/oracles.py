"""Straight-line forward oracles for the two models.

Plain Python loops over ``math`` scalars, written from the model description
rather than from the library code, for cross-checking the vectorised passes.
"""
import math

PAD = 0


def softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def row(E, i):
    return [float(x) for x in E[i]]


def mean_rows(E, ids):
    ids = [i for i in ids if i != PAD]
    d = len(E[0])
    return [sum(E[i][k] for i in ids) / len(ids) for k in range(d)]


def memn2n_oracle(P, ex, hops=1):
    """P maps 'A','B','C','F' to nested lists. Returns (probs, [attention per hop])."""
    m = [mean_rows(P["A"], s) for s in ex.story]
    c = [mean_rows(P["C"], s) for s in ex.story]
    q = mean_rows(P["B"], ex.question)
    attns = []
    for _ in range(hops):
        a = softmax([dot(mi, q) for mi in m])
        attns.append(a)
        o = [sum(a[i] * c[i][k] for i in range(len(c))) for k in range(len(q))]
        q = [q[k] + o[k] for k in range(len(q))]
    scores = [dot(q, mean_rows(P["F"], ch)) for ch in ex.choices]
    return softmax(scores), attns


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v] if n > 1e-12 else [0.0] * len(v)


def conv_relu(rows, W, b):
    """Same-padded sliding window over ``rows`` (L × d_in), W is w × d_in × d_out."""
    L, w = len(rows), len(W)
    pad = w // 2
    out = []
    for t in range(L):
        vals = []
        for o in range(len(b)):
            acc = b[o]
            for j in range(w):
                src = t + j - pad
                if 0 <= src < L:
                    for i in range(len(rows[src])):
                        acc += rows[src][i] * W[j][i][o]
            vals.append(max(acc, 0.0))
        out.append(vals)
    return out


def qacnn_oracle(P, ex, choice_len, scale):
    """P maps short names to nested lists. Returns (probs, word_attn, sent_attn)."""
    E = P["embed"]
    story = [[unit(row(E, t)) for t in s] for s in ex.story]
    question = [unit(row(E, t)) for t in ex.question]
    word_attn, sent_logit = [], []
    for sent in story:
        logits = [max(dot(w, qw) for qw in question) for w in sent]
        word_attn.append(softmax([scale * x for x in logits]))
        sent_logit.append(max(logits))
    sent_attn = softmax([scale * x for x in sent_logit])
    scores = []
    for ch in ex.choices:
        cw = [unit(row(E, t)) for t in ch[:choice_len]]
        cw += [[0.0] * len(E[0])] * (choice_len - len(cw))
        feats = []
        for sent, a in zip(story, word_attn):
            sc = [[dot(w, c) for c in cw] for w in sent]
            H = conv_relu(sc, P["cnn1.weight"], P["cnn1.bias"])
            feats.append([sum(a[l] * H[l][f] for l in range(len(sent))) for f in range(len(H[0]))])
        G = conv_relu(feats, P["cnn2.weight"], P["cnn2.bias"])
        feat = [sum(sent_attn[n] * G[n][f] for n in range(len(G))) for f in range(len(G[0]))]
        W1, b1, W2 = P["fc1.weight"], P["fc1.bias"], P["fc2.weight"]
        h = [max(sum(feat[i] * W1[i][j] for i in range(len(feat))) + b1[j], 0.0) for j in range(len(b1))]
        scores.append(sum(h[j] * W2[j][0] for j in range(len(h))) + float(P["fc2.bias"]))
    return softmax(scores), word_attn, sent_attn


def as_lists(params, prefix):
    return {n[len(prefix) + 1:]: params[n].data.tolist() for n in params.names()}


def random_example(rng, vocab_size, sentences=3, words=5, choices=3, choice_words=2, ragged=True):
    """Encoded example with ids in [2, vocab_size); lengths vary when ``ragged``."""
    from mcqa_transfer.corpus import McqaExample

    def sent(n):
        k = int(rng.integers(1, n + 1)) if ragged else n
        return [int(x) for x in rng.integers(2, vocab_size, size=k)]
    return McqaExample([sent(words) for _ in range(sentences)], sent(words),
                       [sent(choice_words) for _ in range(choices)], int(rng.integers(choices)))
