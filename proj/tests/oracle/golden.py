"""Independent numpy reference for the golden fixtures.

Reads tests/fixtures/inputs/*.rsat (written by make_fixtures) and writes the
expected tensors to tests/fixtures/golden/. Everything is plain double
precision with naive loops or whole-matrix numpy; nothing here shares code
with the C++ library.

    python3 tests/oracle/golden.py tests/fixtures
"""

import csv
import json
import math
import struct
import sys
from pathlib import Path

import numpy as np


def read_rsat(path):
    raw = Path(path).read_bytes()
    assert raw[:4] == b"RSAT" and raw[4] == 1
    dtype, rank = raw[5], raw[6]
    dims = struct.unpack_from("<%dQ" % rank, raw, 7)
    off = 7 + 8 * rank
    np_type = "<f4" if dtype == 0 else "<f8"
    data = np.frombuffer(raw, dtype=np_type, offset=off).astype(np.float64)
    return data.reshape(dims)


def write_rsat(path, arr):
    arr = np.asarray(arr, dtype=np.float64)
    head = b"RSAT" + bytes([1, 1, arr.ndim]) + struct.pack("<%dQ" % arr.ndim, *arr.shape)
    Path(path).write_bytes(head + arr.astype("<f8").tobytes())


def softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def key_block_lens(tv, tt, b):
    lens = [b] * (tv // b)
    rest = tt
    while rest > 0:
        lens.append(min(b, rest))
        rest -= b
    return lens


def block_of(lens):
    out = []
    for m, n in enumerate(lens):
        out += [m] * n
    return np.array(out)


def pool(x, lens):
    rows, start = [], 0
    for n in lens:
        rows.append(x[start:start + n].mean(axis=0))
        start += n
    return np.array(rows)


def masked_attention(q, k, v, token_mask):
    d = q.shape[1]
    s = q @ k.T / math.sqrt(d)
    s = np.where(token_mask, s, -np.inf)
    w = softmax(s)
    return w, w @ v


class Problem:
    def __init__(self, inputs, prefix, block, as_float=False):
        def load(name):
            m = read_rsat(inputs / f"{prefix}_{name}.rsat")
            if as_float:
                m = m.astype(np.float32).astype(np.float64)
            return m

        self.qv, self.qt, self.k, self.v = load("q_video"), load("q_text"), load("k"), load("v")
        if self.qt.ndim == 1:
            self.qt = self.qt.reshape(0, self.qv.shape[1])
        self.b = block
        self.tv, self.tt, self.d = self.qv.shape[0], self.qt.shape[0], self.qv.shape[1]
        self.lens = key_block_lens(self.tv, self.tt, block)
        self.n, self.m = self.tv // block, len(self.lens)
        self.kblock = block_of(self.lens)
        self.q_pool = pool(self.qv, [block] * self.n)
        self.k_pool = pool(self.k, self.lens)
        self.v_pool = pool(self.v, self.lens)

    def mixed_scores(self):
        k_mix = np.vstack([self.k_pool[: self.n], self.k[self.tv:]])
        return softmax(self.q_pool @ k_mix.T / math.sqrt(self.d))

    def a_pool(self):
        a = self.mixed_scores()
        av, at = a[:, : self.n], a[:, self.n:]
        denom = self.b * av.sum(axis=1) + at.sum(axis=1)
        out = np.zeros((self.n, self.m))
        out[:, : self.n] = self.b * av / denom[:, None]
        for t in range(self.tt):
            out[:, self.n + t // self.b] += at[:, t] / denom
        return out

    def pooled_scores(self):
        return self.q_pool @ self.k_pool.T / math.sqrt(self.d)

    def gain(self):
        return np.abs(self.b * np.array(self.lens)[None, :] * self.pooled_scores())

    def pooling_error(self):
        # Sum of first-order deviations over every token pair, by brute force.
        err = np.zeros((self.n, self.m))
        sd = math.sqrt(self.d)
        for i in range(self.tv):
            n = i // self.b
            dq = self.qv[i] - self.q_pool[n]
            for j in range(self.tv + self.tt):
                m = self.kblock[j]
                err[n, m] += (dq @ self.k_pool[m] + self.q_pool[n] @ (self.k[j] - self.k_pool[m])) / sd
        return np.abs(err)

    def full_weights(self):
        return softmax(self.qv @ self.k.T / math.sqrt(self.d))

    def block_sum(self, w):
        out = np.zeros((self.n, self.m))
        for n in range(self.n):
            rows = w[n * self.b:(n + 1) * self.b]
            for m in range(self.m):
                out[n, m] = rows[:, self.kblock == m].sum() / self.b
        return out

    def token_mask(self, block_mask):
        return block_mask[np.arange(self.tv) // self.b][:, self.kblock]


def sparse_mask(a_pool, frac, p, radius, force_text, n_q):
    n, m = a_pool.shape
    floor_count = max(1, min(m, math.ceil(frac * m - 1e-9)))
    mask = np.zeros((n, m), dtype=bool)
    for r in range(n):
        order = sorted(range(m), key=lambda c: (-a_pool[r, c], c))
        kept, cum = 0, 0.0
        for c in order:
            if kept >= floor_count and cum >= p:
                break
            mask[r, c] = True
            cum += a_pool[r, c]
            kept += 1
        for c in range(max(0, r - radius), min(n_q - 1, r + radius) + 1):
            mask[r, c] = True
        if force_text:
            mask[r, n_q:] = True
    return mask


def pipeline(pb, frac, p, radius, force_text, variant):
    a = pb.a_pool()
    mask = sparse_mask(a, frac, p, radius, force_text, pb.n)
    _, o = masked_attention(pb.qv, pb.k, pb.v, pb.token_mask(mask))
    if variant == "sparse-unrectified":
        return o, mask
    r = np.where(mask.all(axis=1), 1.0, (a * mask).sum(axis=1))
    if variant == "sparse-rectified":
        comp = pb.gain() > pb.pooling_error()
    elif variant == "compensate-all":
        comp = np.ones_like(mask)
    else:
        comp = np.zeros_like(mask)
    comp = comp & ~mask
    out = np.zeros_like(o)
    for n in range(pb.n):
        extra = (a[n] * comp[n]) @ pb.v_pool
        rows = slice(n * pb.b, (n + 1) * pb.b)
        out[rows] = r[n] * o[rows] + extra
    return out, mask


def main(root):
    root = Path(root)
    inputs, golden = root / "inputs", root / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    recorded = {}

    write_rsat(golden / "pool_x_pooled.rsat", pool(read_rsat(inputs / "pool_x.rsat"), [4, 4]))

    q, k, v = (read_rsat(inputs / f"masked_{x}.rsat") for x in "qkv")
    diag = np.kron(np.eye(4, dtype=bool), np.ones((4, 4), dtype=bool))
    w, o = masked_attention(q, k, v, diag)
    write_rsat(golden / "masked_diag_weights.rsat", w)
    write_rsat(golden / "masked_diag_output.rsat", o)

    # Morton order of a (2,4,4) grid by explicit bit interleaving.
    t_, h_, w_ = 2, 4, 4
    codes = []
    for idx in range(t_ * h_ * w_):
        t, y, x = idx // (h_ * w_), (idx // w_) % h_, idx % w_
        code = 0
        for bit in range(21):
            code |= ((x >> bit) & 1) << (3 * bit)
            code |= ((y >> bit) & 1) << (3 * bit + 1)
            code |= ((t >> bit) & 1) << (3 * bit + 2)
        codes.append((code, idx))
    write_rsat(golden / "morton_2x4x4_perm.rsat", [idx for _, idx in sorted(codes)])

    mix = Problem(inputs, "mix", 4)
    write_rsat(golden / "mix_scores.rsat", mix.mixed_scores())

    ipar = Problem(inputs, "ipar", 4)
    a = ipar.a_pool()
    truth = ipar.block_sum(ipar.full_weights())
    cos = (a * truth).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(truth, axis=1))
    write_rsat(golden / "ipar_a_pool.rsat", a)
    write_rsat(golden / "ipar_block_sum.rsat", truth)
    recorded["ipar_row_cosine_min"] = float(cos.min())
    recorded["ipar_row_cosine_mean"] = float(cos.mean())

    gain = Problem(inputs, "gain", 4)
    write_rsat(golden / "gain_gain.rsat", gain.gain())

    kern = Problem(inputs, "kernel", 8)
    block_mask = np.zeros((kern.n, kern.m), dtype=bool)
    block_mask[np.arange(kern.n), np.arange(kern.n)] = True
    block_mask[:, kern.n:] = True
    _, o = masked_attention(kern.qv, kern.k, kern.v, kern.token_mask(block_mask))
    write_rsat(golden / "kernel_diag_text_output.rsat", o)
    _, o_text = masked_attention(kern.qt, kern.k, kern.v, np.ones((kern.tt, kern.tv + kern.tt), dtype=bool))
    write_rsat(golden / "kernel_text_output.rsat", o_text)

    demo = Problem(inputs, "demo", 8)
    out, mask = pipeline(demo, 0.2, 0.3, 1, True, "sparse-rectified")
    write_rsat(golden / "demo_rectified_o_video.rsat", out)
    write_rsat(golden / "demo_mask.rsat", mask.astype(np.float64))
    a = demo.a_pool()
    r = np.where(mask.all(axis=1), 1.0, (a * mask).sum(axis=1))
    write_rsat(golden / "demo_r.rsat", r)
    true_r = (demo.block_sum(demo.full_weights()) * mask).sum(axis=1)
    recorded["demo_r_max_gap_vs_true_block_mass"] = float(np.abs(r - true_r).max())
    comp = demo.gain() > demo.pooling_error()
    write_rsat(golden / "demo_comp_mask.rsat", comp.astype(np.float64))
    write_rsat(golden / "demo_gain.rsat", demo.gain())

    # Exact softmax-form condition and its agreement with the relaxed one.
    fw = demo.full_weights()
    exact_err = np.zeros((demo.n, demo.m))
    for i in range(demo.tv):
        n = i // demo.b
        for mm in range(demo.m):
            sel = demo.kblock == mm
            exact_err[n, mm] += np.abs(fw[i, sel] - a[n, mm] / demo.lens[mm]).sum()
    exact_err /= demo.b
    agreement = float(((a > exact_err) == comp).mean())
    recorded["demo_gapr_agreement"] = agreement

    lens = np.array(demo.lens)
    flops_full = 4 * demo.tv * (demo.tv + demo.tt) * demo.d
    flops_sparse = int(4 * demo.d * demo.b * (mask * lens[None, :]).sum())
    recorded["demo_sparsity"] = float(1 - mask.sum() / mask.size)
    recorded["demo_flops_full"] = flops_full
    recorded["demo_flops_sparse"] = flops_sparse

    la, lb = read_rsat(inputs / "l1_a.rsat"), read_rsat(inputs / "l1_b.rsat")
    recorded["l1_a_vs_b"] = float(np.abs(la - lb).sum() / np.abs(lb).sum())

    # Demo sweep metrics on single-precision inputs, for the frozen sweep CSV.
    demo_f = Problem(inputs, "demo", 8, as_float=True)
    all_q = np.vstack([demo_f.qv, demo_f.qt])
    _, ref = masked_attention(all_q, demo_f.k, demo_f.v, np.ones((all_q.shape[0], demo_f.k.shape[0]), dtype=bool))
    _, text_out = masked_attention(demo_f.qt, demo_f.k, demo_f.v, np.ones((demo_f.tt, demo_f.k.shape[0]), dtype=bool))
    rows = []
    for frac in (0.5, 0.2, 0.1):
        for variant in ("sparse-unrectified", "sparse-rectified", "sparse-rectified-no-gapr"):
            o, mk = pipeline(demo_f, frac, 0.3, 1, True, variant)
            test = np.vstack([o, text_out])
            l1 = np.abs(test - ref).sum() / np.abs(ref).sum()
            cs = (test * ref).sum() / (np.linalg.norm(test) * np.linalg.norm(ref))
            rows.append([frac, variant, l1, cs, 1 - mk.sum() / mk.size])
    with open(golden / "demo_sweep_oracle.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["top_k_fraction", "variant", "normalized_l1", "cosine_similarity", "sparsity"])
        for row in rows:
            wr.writerow([row[0], row[1], "%.12g" % row[2], "%.12g" % row[3], "%.12g" % row[4]])

    (golden / "recorded.json").write_text(json.dumps(recorded, indent=2, sort_keys=True) + "\n")
    print(json.dumps(recorded, indent=2, sort_keys=True))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
