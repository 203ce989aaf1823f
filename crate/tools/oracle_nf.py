#!/usr/bin/env python3
"""Independent brute-force reference for the normal-form goldens.

Builds the quartic/sextic Hamiltonian pieces by enumerating ordered index
tuples, runs the bracket/homological chain with plain dict arithmetic, and
emits the golden term lists plus a handful of frozen facts that the Rust
test suite pins. Deliberately shares no code with the crate: different
data structures, different counting route.

Usage: python3 tools/oracle_nf.py [--golden-dir crates/nls-gibbs/tests/golden]
"""

import argparse
import itertools
import json
import math
import os

TWO_PI = 2.0 * math.pi


def canon(holo, anti):
    return tuple(sorted(holo)), tuple(sorted(anti))


def add_term(poly, key, coeff):
    cur = poly.get(key, 0j)
    cur += coeff
    if cur == 0:
        poly.pop(key, None)
    else:
        poly[key] = cur


def build_h2j(n_max, j, cj):
    """(cj/2j) * (2pi)^(1-j) summed over ordered zero-momentum 2j-tuples."""
    poly = {}
    base = cj / (2.0 * j) * TWO_PI ** (1 - j)
    modes = range(-n_max, n_max + 1)
    for holo in itertools.product(modes, repeat=j):
        s = sum(holo)
        for anti in itertools.product(modes, repeat=j - 1):
            last = s - sum(anti)
            if abs(last) <= n_max:
                add_term(poly, canon(holo, anti + (last,)), complex(base))
    return poly


def sq_gap(key):
    holo, anti = key
    return sum(k * k for k in holo) - sum(k * k for k in anti)


def split_kernel_range(poly):
    ker, rng = {}, {}
    for key, c in poly.items():
        (ker if sq_gap(key) == 0 else rng)[key] = c
    return ker, rng


def lh2_apply(poly):
    return {k: -1j * sq_gap(k) * c for k, c in poly.items() if sq_gap(k) != 0 or c == 0}


def lh2_invert(poly):
    out = {}
    for key, c in poly.items():
        gap = sq_gap(key)
        assert gap != 0, f"kernel monomial {key} in range polynomial"
        out[key] = c / (-1j * gap)
    return out


def multiplicity(tup, k):
    return sum(1 for x in tup if x == k)


def remove_one(tup, k):
    out = list(tup)
    out.remove(k)
    return tuple(out)


def bracket(f, g):
    """{f,g} = +i sum_k (df/dpsi_k dg/dpsibar_k - dg/dpsi_k df/dpsibar_k)."""
    out = {}
    for (h1, a1), c1 in f.items():
        for (h2, a2), c2 in g.items():
            for k in set(h1) & set(a2):
                key = canon(remove_one(h1, k) + h2, a1 + remove_one(a2, k))
                add_term(out, key, 1j * c1 * c2 * multiplicity(h1, k) * multiplicity(a2, k))
            for k in set(h2) & set(a1):
                key = canon(remove_one(h2, k) + h1, a2 + remove_one(a1, k))
                add_term(out, key, -1j * c1 * c2 * multiplicity(h2, k) * multiplicity(a1, k))
    return {k: c for k, c in out.items() if c != 0}


def scale(poly, s):
    return {k: s * c for k, c in poly.items()}

def padd(f, g):
    out = dict(f)
    for k, c in g.items():
        add_term(out, k, c)
    return out


def prune(poly, eps=1e-18):
    return {k: c for k, c in poly.items() if abs(c) > eps}


def sup_norm(poly):
    return max((abs(c) for c in poly.values()), default=0.0)


def z4_closed_form(n_max, c2):
    poly = {}
    for a in range(-n_max, n_max + 1):
        add_term(poly, canon((a, a), (a, a)), complex(c2 / (8.0 * math.pi)))
        for b in range(a + 1, n_max + 1):
            add_term(poly, canon((a, b), (a, b)), complex(c2 / TWO_PI))
    return poly


def build_chain(n_max, q, c, tk):
    """Returns dict of all constructed objects for F coefficients c = {2: c2, ...}."""
    h4 = build_h2j(n_max, 2, c.get(2, 0.0))
    h6 = build_h2j(n_max, 3, c.get(3, 0.0)) if q >= 3 else {}
    z4, h4r = split_kernel_range(h4)
    chi4 = scale(lh2_invert(h4r), -1.0)
    gt = padd(h6, padd(scale(bracket(h4r, chi4), 0.5), bracket(z4, chi4)))
    gt = prune(gt, 1e-16)
    z6, gtr = split_kernel_range(gt)
    chi6 = scale(lh2_invert(gtr), -1.0)
    i_tk = {canon((tk,), (tk,)): 1.0 + 0j}
    r6 = prune(bracket(i_tk, z6), 1e-16)
    return dict(h4=h4, h6=h6, z4=z4, h4r=h4r, chi4=chi4, gt=gt, z6=z6, chi6=chi6, r6=r6)


def check_identities(objs):
    res = padd(lh2_apply(objs["chi4"]), objs["h4r"])
    assert sup_norm(res) < 1e-14, f"chi4 identity residual {sup_norm(res)}"
    _, gtr = split_kernel_range(objs["gt"])
    res = padd(lh2_apply(objs["chi6"]), gtr)
    assert sup_norm(res) < 1e-13, f"chi6 identity residual {sup_norm(res)}"
    h2 = {canon((k,), (k,)): complex(k * k) for k in range(-9, 10)}
    res = bracket(h2, objs["z4"])
    assert sup_norm(res) < 1e-15, f"{{h2,z4}} residual {sup_norm(res)}"


def emit_jsonl(poly, path):
    lines = []
    for (holo, anti) in sorted(poly.keys()):
        cc = poly[(holo, anti)]
        lines.append(json.dumps({
            "holo": list(holo), "anti": list(anti),
            "re": cc.real, "im": cc.imag, "tag": "one",
        }))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--golden-dir", default=None)
    args = ap.parse_args()

    h4_n2 = build_h2j(2, 2, 1.0)
    k_n2, r_n2 = split_kernel_range(h4_n2)
    print(f"h4 N=2 c2=1: canonical terms {len(h4_n2)} (kernel {len(k_n2)}, range {len(r_n2)})")

    objs4 = build_chain(4, 2, {2: 1.0}, 1)
    check_identities(objs4)
    zc = z4_closed_form(4, 1.0)
    diff = padd(objs4["z4"], scale(zc, -1.0))
    print(f"z4 N=4 vs closed form: max diff {sup_norm(diff):.3e}")
    assert sup_norm(diff) < 1e-15
    print(f"z4 N=4: terms {len(objs4['z4'])}, sup {sup_norm(objs4['z4']):.17g}")
    print(f"h4 N=4: terms {len(objs4['h4'])}; chi4 terms {len(objs4['chi4'])}")
    print(f"z6 N=4 q=2: terms {len(objs4['z6'])}, sup {sup_norm(objs4['z6']):.17g}")
    probe = canon((-3, 1, 2), (-2, -1, 3))
    print(f"z6 N=4 coeff at {probe}: {objs4['z6'].get(probe, 0j)}")
    for tk in (0, 1):
        r6 = prune(bracket({canon((tk,), (tk,)): 1.0 + 0j}, objs4["z6"]), 1e-16)
        print(f"R6 N=4 q=2 tk={tk}: terms {len(r6)}")

    objs7 = build_chain(7, 2, {2: 1.0}, 1)
    check_identities(objs7)
    probe7 = canon((1, 5, 6), (2, 3, 7))
    print(f"z6 N=7 q=2: terms {len(objs7['z6'])}, coeff at {probe7}: {objs7['z6'].get(probe7, 0j)}")
    print(f"R6 N=7 q=2 tk=1: terms {len(objs7['r6'])}")

    objs8 = build_chain(8, 2, {2: 1.0}, 1)
    check_identities(objs8)
    print(f"z6 N=8 q=2: terms {len(objs8['z6'])}, sup {sup_norm(objs8['z6']):.17g}")
    probe8 = canon((1, 5, 6), (2, 3, 7))
    print(f"z6 N=8 coeff at {probe8}: {objs8['z6'].get(probe8, 0j)}")
    for tk in (0, 1, 3):
        r6 = prune(bracket({canon((tk,), (tk,)): 1.0 + 0j}, objs8["z6"]), 1e-16)
        big = sum(1 for key in r6 if sq_gap(key) == 0)
        print(f"R6 N=8 q=2 tk={tk}: terms {len(r6)} (all kernel: {big == len(r6)})")

    print(f"pi*coth(pi) = {math.pi / math.tanh(math.pi):.10f}")

    if args.golden_dir:
        os.makedirs(args.golden_dir, exist_ok=True)
        emit_jsonl(objs4["z4"], os.path.join(args.golden_dir, "z4_n4.jsonl"))
        emit_jsonl(objs4["z6"], os.path.join(args.golden_dir, "z6_n4.jsonl"))
        print(f"golden files written to {args.golden_dir}")


if __name__ == "__main__":
    main()
