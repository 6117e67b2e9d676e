"""Backoff n-gram language model with Witten-Bell discounting.

Probabilities follow the backoff form of Witten-Bell: for a context h with
total count c(h) and T(h) distinct continuations, observed continuations get
P(w|h) = c(h,w) / (c(h) + T(h)) and the held-out mass T(h)/(c(h)+T(h)) is
routed through a backoff weight so every conditional distribution sums to 1.
The model serializes to ARPA text (log10) and exports to a standard backoff
acceptor FST over words (negative natural log weights).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .fst import Fst, SymbolTable

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
LOG10_MIN = -99.0
DEFAULT_ORDER = 4


class NGramError(ValueError):
    pass


@dataclass
class NGramModel:
    order: int
    # ngram tuple -> (log10 prob, log10 backoff weight or None)
    entries: dict = field(default_factory=dict)
    vocabulary: frozenset = frozenset()

    def prob(self, ngram):
        return self.entries[tuple(ngram)][0]

    def _map(self, word):
        return word if word in self.vocabulary else UNK

    def word_logprob(self, context, word):
        """Backoff log10 probability of ``word`` after ``context``."""
        word = self._map(word)
        context = tuple(self._map(w) for w in context)[-(self.order - 1) :]
        return self._score(context, word)

    def _score(self, context, word):
        ngram = context + (word,)
        hit = self.entries.get(ngram)
        if hit is not None:
            return hit[0]
        if not context:
            # unigram miss can only happen for symbols outside the model
            return LOG10_MIN
        bow = 0.0
        ctx_entry = self.entries.get(context)
        if ctx_entry is not None and ctx_entry[1] is not None:
            bow = ctx_entry[1]
        return bow + self._score(context[1:], word)

    def sentence_logprob(self, words):
        """log10 probability of the sentence including the end token."""
        tokens = [self._map(w) for w in words] + [EOS]
        context = (BOS,)
        total = 0.0
        for w in tokens:
            total += self._score(context[-(self.order - 1) :], w)
            context = context + (w,)
        return total

    def conditional_distribution(self, context):
        """{word: probability} over the predictable vocabulary (no <s>)."""
        out = {}
        context = tuple(context)[-(self.order - 1) :]
        for w in self.vocabulary:
            if w == BOS:
                continue
            out[w] = 10.0 ** self._score(context, w)
        return out

    # ------------------------------------------------------------------

    def write_arpa(self, path):
        by_order = {}
        for ngram in self.entries:
            by_order.setdefault(len(ngram), []).append(ngram)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\\data\\\n")
            for n in range(1, self.order + 1):
                fh.write(f"ngram {n}={len(by_order.get(n, []))}\n")
            for n in range(1, self.order + 1):
                fh.write(f"\n\\{n}-grams:\n")
                for ngram in sorted(by_order.get(n, [])):
                    p, bow = self.entries[ngram]
                    line = f"{p:.7f}\t{' '.join(ngram)}"
                    if bow is not None:
                        line += f"\t{bow:.7f}"
                    fh.write(line + "\n")
            fh.write("\n\\end\\\n")

    @classmethod
    def read_arpa(cls, path):
        entries = {}
        order = 0
        with open(path, encoding="utf-8") as fh:
            section = None
            for line in fh:
                line = line.strip()
                if not line or line == "\\data\\" or line.startswith("ngram "):
                    continue
                if line == "\\end\\":
                    break
                if line.endswith("-grams:"):
                    section = int(line[1 : line.index("-")])
                    order = max(order, section)
                    continue
                if section is None:
                    continue
                parts = line.split("\t")
                p = float(parts[0])
                ngram = tuple(parts[1].split(" "))
                bow = float(parts[2]) if len(parts) > 2 else None
                entries[ngram] = (p, bow)
        vocab = frozenset(g[0] for g in entries if len(g) == 1)
        return cls(order=order, entries=entries, vocabulary=vocab)


def train_ngram(sentences, order=DEFAULT_ORDER, include_boundaries=True,
                extra_vocab=()):
    """Witten-Bell n-gram model from tokenized sentences.

    ``include_boundaries=False`` trains on raw token streams without
    <s>/</s> padding (useful for plain unigram statistics). ``extra_vocab``
    adds words to the vocabulary even when the corpus never shows them;
    they share the held-out unigram mass like <unk>, which keeps the
    exported grammar open to every lexicon word.
    """
    sentences = [list(s) for s in sentences]
    if not sentences or all(not s for s in sentences):
        raise NGramError("empty training corpus")
    counts = [Counter() for _ in range(order + 1)]  # index by n
    for sent in sentences:
        padded = [BOS] + sent + [EOS] if include_boundaries else list(sent)
        for n in range(1, order + 1):
            for i in range(len(padded) - n + 1):
                gram = tuple(padded[i : i + n])
                if n == 1 and gram[0] == BOS:
                    continue
                counts[n][gram] += 1
    vocab = {w for g in counts[1] for w in g} | {UNK} | set(extra_vocab)
    if include_boundaries:
        vocab |= {EOS, BOS}
    entries = {}

    # unigram level: Witten-Bell over the whole stream, leftover mass
    # spread uniformly over zero-count vocabulary entries (at least <unk>)
    total = sum(counts[1].values())
    t1 = len(counts[1])
    denom = total + t1
    unseen = [w for w in sorted(vocab) if w not in (BOS,) and (w,) not in counts[1]]
    unigram_p = {}
    leftover = t1 / denom
    # no zero-count words to receive the held-out mass -> fold it back
    scale = 1.0 if unseen else 1.0 / (1.0 - leftover)
    for (w,), c in counts[1].items():
        unigram_p[w] = scale * c / denom
    for w in unseen:
        unigram_p[w] = leftover / len(unseen)
    for w, p in unigram_p.items():
        entries[(w,)] = (math.log10(p) if p > 0 else LOG10_MIN, None)
    if include_boundaries:
        entries[(BOS,)] = (LOG10_MIN, None)

    for n in range(2, order + 1):
        contexts = {}
        for gram, c in counts[n].items():
            contexts.setdefault(gram[:-1], []).append((gram[-1], c))
        for ctx, conts in sorted(contexts.items()):
            c_h = sum(c for _, c in conts)
            t_h = len(conts)
            denom = c_h + t_h
            probs = {w: c / denom for w, c in conts}
            mass = t_h / denom
            covered = sum(
                10.0 ** _score_entries(entries, ctx[1:], w) for w in probs
            )
            residual = 1.0 - covered
            if residual <= 1e-12:
                # context saw the whole vocabulary: fold the held-out mass
                # back in and disable the backoff path
                scale = 1.0 / (1.0 - mass)
                for w, p in probs.items():
                    entries[ctx + (w,)] = (math.log10(p * scale), None)
                bow = LOG10_MIN
            else:
                for w, p in probs.items():
                    entries[ctx + (w,)] = (math.log10(p), None)
                bow = math.log10(mass / residual)
            # ctx was itself counted as an (n-1)-gram, so it has an entry
            entries[ctx] = (entries[ctx][0], bow)
    return NGramModel(order=order, entries=entries, vocabulary=frozenset(vocab))


def _score_entries(entries, context, word):
    ngram = tuple(context) + (word,)
    hit = entries.get(ngram)
    if hit is not None:
        return hit[0]
    if not context:
        return LOG10_MIN
    bow = 0.0
    ctx = tuple(context)
    if ctx in entries and entries[ctx][1] is not None:
        bow = entries[ctx][1]
    return bow + _score_entries(entries, context[1:], word)


LN10 = math.log(10.0)


def ngram_to_fst(model):
    """Standard backoff acceptor over words (tropical, -ln weights)."""
    table = SymbolTable(sorted(model.vocabulary | {BOS}))
    g = Fst(semiring="tropical", isyms=table, osyms=table)
    # context states: every entry of length < order, plus the empty context
    contexts = {()}
    for ngram in model.entries:
        if len(ngram) < model.order:
            contexts.add(ngram)
    state_of = {}
    for ctx in sorted(contexts, key=lambda c: (len(c), c)):
        state_of[ctx] = g.add_state()
    # reorder so state 0 is the start context
    start_ctx = (BOS,) if (BOS,) in state_of else ()

    def dest_context(ngram):
        for i in range(len(ngram)):
            if ngram[i:] in state_of:
                return ngram[i:]
        return ()

    for ngram, (p, bow) in model.entries.items():
        ctx, w = ngram[:-1], ngram[-1]
        if ctx not in state_of:
            continue
        src = state_of[ctx]
        if w == EOS:
            g.set_final(src, -p * LN10)
        elif w != BOS:
            dst = state_of[dest_context(ngram)]
            g.add_arc(src, w, w, -p * LN10, dst)
    for ctx in contexts:
        if not ctx:
            continue
        entry = model.entries.get(ctx)
        bow = entry[1] if entry is not None else None
        if bow is None:
            bow = 0.0
        g.add_arc(state_of[ctx], "<eps>", "<eps>", -bow * LN10, state_of[ctx[1:]])
    # swap states so the start context occupies state 0
    if state_of[start_ctx] != 0:
        g = _swap_start(g, state_of[start_ctx])
    return g.validate()


def _swap_start(g, start_state):
    perm = list(range(g.num_states))
    perm[0], perm[start_state] = perm[start_state], perm[0]
    inv = {old: new for new, old in enumerate(perm)}
    out = Fst(semiring=g.semiring, isyms=g.isyms, osyms=g.osyms)
    for _ in range(g.num_states):
        out.add_state()
    for src, arcs in enumerate(g.arcs):
        for il, ol, w, dst in arcs:
            out.add_arc_ids(inv[src], il, ol, w, inv[dst])
    for s, w in g.finals.items():
        out.set_final(inv[s], w)
    return out


def fst_sentence_score(g, words):
    """-ln sentence probability by deterministic backoff traversal of G.

    At each step take the matching word arc if the current state has one,
    otherwise follow the epsilon backoff arc. Independent of the model's
    own scoring path, so the two can be cross-checked.
    """
    state = g.start
    total = 0.0
    for w in words:
        wid = g.isyms.id(w) if w in g.isyms else g.isyms.id(UNK)
        while True:
            match = next((a for a in g.arcs[state] if a[0] == wid), None)
            if match is not None:
                total += match[2]
                state = match[3]
                break
            back = next((a for a in g.arcs[state] if a[0] == 0), None)
            if back is None:
                raise NGramError(f"no arc for {w!r} and no backoff at state {state}")
            total += back[2]
            state = back[3]
    while state not in g.finals:
        back = next((a for a in g.arcs[state] if a[0] == 0), None)
        if back is None:
            raise NGramError(f"state {state} cannot reach a final state")
        total += back[2]
        state = back[3]
    return total + g.finals[state]
