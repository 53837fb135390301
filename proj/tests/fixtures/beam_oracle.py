#!/usr/bin/env python3
"""Brute-force oracle for the beam-search decoder.

Scores every complete outcome of small hand-built per-step logit tables
(token ids: 0=PAD, 1=BOS, 2=EOS, 3=UNK, 4.. content) and prints the frozen
expectations used by tests/test_decode.cpp.

Rules mirrored by the decoder:
  - scores are log softmax(logits / temperature) over the FULL vocabulary
  - PAD and BOS are never candidates; EOS finishes a hypothesis
  - per-step pruning keeps the top beam_size candidates (finished and
    unfinished compete for slots) by score/len^alpha, ties by smaller token
    id then earlier beam index; selected finished hypotheses are held aside
    and never extended
  - the final pick is the argmax over held finished + remaining actives by
    the same normalized score (ties: smaller last token, earlier insertion)
  - slot competition makes beam_size=1 reduce exactly to greedy: the single
    slot finishes iff EOS is the step argmax, which is greedy's stop rule
"""
import math

PAD, BOS, EOS, UNK = 0, 1, 2, 3
V = 7  # ids 4,5,6 are content tokens


def log_softmax(logits, temp):
    s = [x / temp for x in logits]
    m = max(s)
    lse = m + math.log(sum(math.exp(x - m) for x in s))
    return [x - lse for x in s]


def norm(logprob, length, alpha):
    return logprob / (length ** alpha)


def candidates():
    return [v for v in range(V) if v not in (PAD, BOS)]


def beam_search(table, beam, temp, alpha, max_len):
    # active: list of (tokens, logprob); candidates carry parent beam index
    active = [([], 0.0)]
    held = []  # selected finished hypotheses: (tokens, logprob, norm, last, insertion)
    ins = 0
    for _ in range(max_len):
        if not active:
            break
        pool = []
        for bi, (toks, lp_sum) in enumerate(active):
            lp = log_softmax(table(toks), temp)
            for v in candidates():
                t2 = toks + [v]
                s2 = lp_sum + lp[v]
                pool.append((t2, s2, norm(s2, len(t2), alpha), v, bi))
        pool.sort(key=lambda c: (-c[2], c[3], c[4]))
        active = []
        for toks, s2, n2, v, _bi in pool[:beam]:
            if v == EOS:
                held.append((toks, s2, n2, v, ins))
                ins += 1
            else:
                active.append((toks, s2))
    final = list(held)
    for toks, s in active:
        final.append((toks, s, norm(s, len(toks), alpha), toks[-1], ins))
        ins += 1
    final.sort(key=lambda c: (-c[2], c[3], c[4]))
    toks, s, _, _, _ = final[0]
    return toks, s


def greedy(table, temp, max_len):
    toks, total = [], 0.0
    for _ in range(max_len):
        lp = log_softmax(table(toks), temp)
        best = None
        for v in candidates():
            if best is None or lp[v] > lp[best]:
                best = v
        toks.append(best)
        total += lp[best]
        if best == EOS:
            break
    return toks, total


def brute_force(table, temp, alpha, max_len):
    """Enumerate every complete outcome (finished at any step, or unfinished
    at max_len) and return the best by normalized score."""
    outcomes = []

    def rec(toks, lp_sum):
        if len(toks) == max_len:
            outcomes.append((toks, lp_sum, norm(lp_sum, len(toks), alpha)))
            return
        lp = log_softmax(table(toks), temp)
        for v in candidates():
            t2, s2 = toks + [v], lp_sum + lp[v]
            if v == EOS:
                outcomes.append((t2, s2, norm(s2, len(t2), alpha)))
            else:
                rec(t2, s2)

    rec([], 0.0)
    outcomes.sort(key=lambda c: (-c[2], c[0]))
    best = outcomes[0]
    runner = outcomes[1]
    assert best[2] != runner[2], "brute-force winner must be unique"
    return best[0], best[1]


FAR = -100.0


def row(eos=FAR, t4=0.0, t5=0.0, t6=0.0):
    return [FAR, FAR, eos, FAR, t4, t5, t6]


def table_forced(toks):
    step = len(toks)
    rows = [row(t4=-10, t5=10, t6=-10),
            row(t4=10, t5=-10, t6=-10),
            row(t4=-10, t5=-10, t6=10),
            row(eos=10, t4=-10, t5=-10, t6=-10)]
    return rows[step] if step < len(rows) else row()


def table_trap(toks):
    if not toks:
        return row(t4=2.0, t5=1.9, t6=0.0)
    prev = toks[-1]
    if prev == 4:
        return row(eos=-1.0, t4=0.5, t5=0.4, t6=0.3)
    if prev == 5:
        return row(eos=-1.0, t4=0.2, t5=0.1, t6=3.0)
    if prev == 6:
        return row(eos=2.5, t4=0.4, t5=0.3, t6=0.2)
    return row()


def table_ties(toks):
    if not toks:
        return row(t4=1.0, t5=1.0, t6=-3.0)
    return row(t4=0.8, t5=0.8, t6=0.2)


def table_scatter(toks):
    step = len(toks)
    prev = toks[-1] if toks else -1
    if step == 0:
        return row(eos=-2.0, t4=0.3, t5=0.7, t6=0.6)
    if step == 1:
        return {4: row(eos=0.9, t4=-0.2, t5=1.1, t6=0.4),
                5: row(eos=-0.5, t4=1.3, t5=-0.8, t6=0.2),
                6: row(eos=0.1, t4=0.6, t5=0.5, t6=-1.4)}.get(prev, row())
    return {4: row(eos=1.8, t4=-0.3, t5=0.2, t6=0.1),
            5: row(eos=-0.2, t4=0.4, t5=0.9, t6=-0.6),
            6: row(eos=2.2, t4=-1.0, t5=0.3, t6=0.5)}.get(prev, row())


def table_eos_first(toks):
    if not toks:
        return row(eos=5.0, t4=-5.0, t5=-5.0, t6=-5.0)
    return row()


def table_alpha_flip(toks):
    # alpha=0 picks the short finished [2]; alpha=1 favors the longer path
    if not toks:
        return [FAR, FAR, 0.0, FAR, 0.85, FAR, FAR]
    return row(t4=0.02, t5=0.01, t6=0.0)


def report(name, table, beam, temp, alpha, max_len, check_brute=False):
    toks, s = beam_search(table, beam, temp, alpha, max_len)
    line = f"{name:28s} beam={beam:2d} T={temp} a={alpha}: tokens={toks} logprob={s!r}"
    if check_brute:
        bt, bs = brute_force(table, temp, alpha, max_len)
        ok = (bt == toks and abs(bs - s) < 1e-12)
        line += f"  brute={bt} {bs!r} {'MATCH' if ok else 'DIFFER'}"
    print(line)


for b in (1, 2, 4):
    report("forced", table_forced, b, 1.0, 0.0, 6)
gt, gs = greedy(table_trap, 1.0, 3)
print(f"{'trap greedy':28s}              : tokens={gt} logprob={gs!r}")
report("trap", table_trap, 3, 1.0, 0.0, 3, check_brute=True)
report("trap", table_trap, 100, 1.0, 0.0, 3, check_brute=True)
report("trap alpha", table_trap, 100, 1.0, 1.5, 3, check_brute=True)
report("ties", table_ties, 2, 1.0, 0.0, 3)
report("scatter", table_scatter, 3, 1.0, 0.0, 3, check_brute=True)
report("scatter", table_scatter, 100, 1.0, 0.0, 3, check_brute=True)
report("scatter alpha", table_scatter, 100, 1.0, 0.7, 3, check_brute=True)
report("scatter cold", table_scatter, 3, 0.5, 0.0, 3, check_brute=True)
report("eos_first", table_eos_first, 3, 1.0, 0.0, 3, check_brute=True)
report("alpha_flip", table_alpha_flip, 3, 1.0, 0.0, 3, check_brute=True)
report("alpha_flip", table_alpha_flip, 3, 1.0, 1.0, 3, check_brute=True)
