"""Independent re-implementation of the tokenizer, candidate enumeration and
signed feature hashing, used to pin the constants in the C++ tests."""
import math
import re

M64 = (1 << 64) - 1
PUNCT = ",.;:!?"


def fnv1a64(s: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in s:
        h ^= b
        h = (h * 0x100000001B3) & M64
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & M64
    return x ^ (x >> 31)


def tokenize(text: str):
    out = []
    for m in re.finditer(r"[A-Za-z0-9\x80-\U0010ffff]+|[" + re.escape(PUNCT) + "]", text):
        out.append(m.group(0).lower())
    return out


def candidates(tokens, variant="punctuation"):
    n = len(tokens)
    pos = set()
    for k in range(1, n):
        tok = tokens[k - 1]
        if variant == "token":
            pos.add(k)
        elif tok in PUNCT and not (variant == "sentence" and tok == ","):
            pos.add(k)
        if variant == "keyword" and k >= 2 and tok in ("and", "or"):
            pos.add(k - 1)
    return sorted(pos) + [n]


def embed(text, d=256, ngram=3):
    acc = [0.0] * d

    def add(feat):
        h = fnv1a64(feat.encode())
        b = splitmix64(h ^ 0x6A09E667F3BCC908) % d
        s = -1.0 if (splitmix64(h ^ 0xBB67AE8584CAA73B) >> 63) else 1.0
        acc[b] += s

    for tok in tokenize(text):
        add("w:" + tok)
        if tok in PUNCT:
            continue
        p = "<" + tok + ">"
        for i in range(len(p) - ngram + 1):
            add("c:" + p[i:i + ngram])
    n = math.sqrt(sum(x * x for x in acc))
    return [x / n for x in acc]


def cos(a, b):
    return sum(x * y for x, y in zip(a, b))


if __name__ == "__main__":
    ex = "Summarize Section 3, list three limitations, and format as bullet points."
    t = tokenize(ex)
    print("paper example L =", len(t), "punctuation candidates =", candidates(t))
    t2 = tokenize("a, b, c.")
    for v in ("punctuation", "sentence", "keyword", "token"):
        print("a, b, c.", v, candidates(t2, v))
    print("keyword paper example", candidates(t, "keyword"))
    a = embed("list three limitations")
    b = embed("list three limitations please")
    c = embed("format as bullet points")
    print("cos(a,b) = %.17g" % cos(a, b))
    print("cos(a,c) = %.17g" % cos(a, c))
    print("cat[0:4] =", ["%.17g" % x for x in embed("cat")[:4]])
