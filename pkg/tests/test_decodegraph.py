import itertools

import numpy as np
import pytest

import support
from phonectc import BLANK
from phonectc.ctc import PosteriorGrid
from phonectc.decodegraph import (
    DecodeFailureError,
    assign_disambiguation,
    build_ctc_topology,
    build_decode_graph,
    build_lexicon_fst,
    decode,
    disambiguation_symbols,
)
from phonectc.fst import compose, make_string_acceptor
from phonectc.inventory import make_alphabet
from phonectc.ngram import fst_sentence_score, ngram_to_fst, train_ngram
from phonectc.textnorm import Prolex


def transduce(t, symbols):
    """Single output string of the topology for one input string."""
    acc = make_string_acceptor(symbols, table=t.isyms)
    out = compose(acc, t).nbest_strings(2)
    assert len(out) == 1
    return list(out[0][0])


def test_topology_collapses():
    alphabet = make_alphabet({"a", "b"})
    t = build_ctc_topology(alphabet)
    assert transduce(t, ["a", "a", BLANK, "a"]) == ["a", "a"]
    assert transduce(t, [BLANK, BLANK]) == []
    assert transduce(t, ["a", BLANK, "b"]) == ["a", "b"]


def test_topology_matches_greedy_collapse():
    from phonectc.ctc import collapse

    alphabet = make_alphabet({"a", "b", "c"})
    t = build_ctc_topology(alphabet)
    rng = np.random.default_rng(0)
    units = [BLANK] + list(alphabet.non_blank_units())
    for _ in range(50):
        seq = [units[i] for i in rng.integers(len(units), size=rng.integers(1, 8))]
        idx = [alphabet.index_of(s) for s in seq]
        want = [alphabet.symbol_at(i) for i in collapse(idx)]
        assert transduce(t, seq) == want


def test_disambiguation_homophones_and_prefixes():
    lex = Prolex()
    lex.add("a", ["x"])
    lex.add("b", ["x"])
    lex.add("go", ["g", "o"])
    lex.add("goal", ["g", "o", "l"])
    lex.add("solo", ["s"])
    assignment = assign_disambiguation(lex)
    assert assignment[("a", ("x",))] == "#1"
    assert assignment[("b", ("x",))] == "#2"
    assert assignment[("go", ("g", "o"))] == "#1"  # proper prefix of goal
    assert assignment[("goal", ("g", "o", "l"))] is None
    assert assignment[("solo", ("s",))] is None


def test_lexicon_fst_single_entry():
    lex = Prolex()
    lex.add("one", ["w", "ʌ", "n"])
    l = build_lexicon_fst(lex)
    acc = make_string_acceptor(["w", "ʌ", "n"], table=l.isyms)
    assert compose(acc, l).nbest_strings(2) == [(("one",), 0.0)]


def test_lexicon_fst_homophones_both_decodable():
    lex = Prolex()
    lex.add("a", ["x"])
    lex.add("b", ["x"])
    l = build_lexicon_fst(lex)
    l.relabel_input_to_eps(disambiguation_symbols(l))
    acc = make_string_acceptor(["x"], table=l.isyms)
    strings = {s for s, _ in compose(acc, l).nbest_strings(4)}
    assert strings == {("a",), ("b",)}


def test_lexicon_fst_prefix_pair_decodable():
    lex = Prolex()
    lex.add("go", ["g", "o"])
    lex.add("goal", ["g", "o", "l"])
    l = build_lexicon_fst(lex)
    l.relabel_input_to_eps(disambiguation_symbols(l))
    for phones, word in [(["g", "o"], "go"), (["g", "o", "l"], "goal"),
                         (["g", "o", "g", "o"], "go go")]:
        acc = make_string_acceptor(phones, table=l.isyms)
        strings = {s for s, _ in compose(acc, l).nbest_strings(6)}
        assert tuple(word.split()) in strings


def make_setup(words_prons, corpus, order=2):
    lex = Prolex()
    units = set()
    for w, p in words_prons:
        lex.add(w, p)
        units.update(p)
    alphabet = make_alphabet(units)
    model = train_ngram([s.split() for s in corpus], order=order,
                        extra_vocab=lex.words())
    g = ngram_to_fst(model)
    return alphabet, lex, g, build_decode_graph(alphabet, lex, g)


def peaked_grid(alphabet, phones, frames_per=2, peak=0.9):
    V1 = len(alphabet)
    rows = []
    for p in phones:
        row = np.full(V1, (1 - peak) / (V1 - 1))
        row[alphabet.index_of(p)] = peak
        rows.extend([row] * frames_per)
    return PosteriorGrid(np.log(np.array(rows)), alphabet=alphabet)


def test_decode_single_word_lexicon():
    alphabet, lex, g, graph = make_setup(
        [("two", ["t", "u"])], ["two", "two two"]
    )
    grid = peaked_grid(alphabet, ["t", "u"])
    words, _ = decode(grid, graph)
    assert words == ["two"]


def test_decode_two_word_lexicon():
    alphabet, lex, g, graph = make_setup(
        [("one", ["w", "n"]), ("two", ["t", "u"])],
        ["one two", "two one", "one", "two"],
    )
    grid = peaked_grid(alphabet, ["t", "u"])
    words, _ = decode(grid, graph)
    assert words == ["two"]


def lm_min_cost(g, words):
    """Shortest-path sentence cost through G (what Viterbi decoding sees;
    can undercut the greedy backoff score when a backoff weight exceeds 1)."""
    acc = make_string_acceptor(list(words), table=g.isyms)
    c = compose(acc, g)
    dist = c.shortest_distance()
    best = min(
        (dist[s] + w for s, w in c.finals.items()), default=float("inf")
    )
    return best


def oracle_decode(alphabet, lex, g, grid, max_words=3):
    """Exhaustive argmin over (word sequence, alignment) pairs."""
    V1 = len(alphabet)
    T = grid.num_frames
    digits = support.all_paths_digits(T, V1)
    collapsed, lengths = support.collapse_matrix(digits)
    costs = -support.path_log_probs(grid, digits)
    best_align = {}
    for row, n, c in zip(collapsed, lengths, costs):
        key = tuple(row[:n])
        if key not in best_align or c < best_align[key]:
            best_align[key] = c
    words = sorted(lex.words())
    best = None
    for n in range(0, max_words + 1):
        for seq in itertools.product(words, repeat=n):
            pron_sets = [
                [p for p, _ in lex.pronunciations(w)] for w in seq
            ]
            for combo in itertools.product(*pron_sets):
                phones = tuple(
                    alphabet.index_of(p) for pron in combo for p in pron
                )
                if phones not in best_align:
                    continue
                total = best_align[phones] + lm_min_cost(g, seq)
                cand = (total, list(seq))
                if best is None or cand < best:
                    best = cand
    return best


def test_decode_matches_exhaustive_oracle():
    rng = np.random.default_rng(123)
    alphabet, lex, g, graph = make_setup(
        [
            ("one", ["w", "n"]),
            ("two", ["t", "u"]),
            ("to", ["t", "u"]),  # homophone pair
            ("go", ["g", "o"]),
            ("goal", ["g", "o", "l"]),  # prefix pair
        ],
        ["one two", "go goal", "to one", "two", "goal go one"],
    )
    for trial in range(8):
        T = int(rng.integers(2, 7))
        grid = support.random_grid(rng, T, len(alphabet))
        grid = PosteriorGrid(grid.log_probs, alphabet=alphabet)
        want = oracle_decode(alphabet, lex, g, grid)
        got_words, got_cost = decode(grid, graph, beam=None)
        assert got_cost == pytest.approx(want[0], abs=1e-9)
        assert got_words == want[1]


def test_unlimited_beam_equals_huge_beam():
    rng = np.random.default_rng(7)
    alphabet, lex, g, graph = make_setup(
        [("one", ["w", "n"]), ("two", ["t", "u"])], ["one two", "two"]
    )
    for _ in range(5):
        grid = support.random_grid(rng, 5, len(alphabet))
        grid = PosteriorGrid(grid.log_probs, alphabet=alphabet)
        assert decode(grid, graph, beam=None) == decode(grid, graph, beam=10**6)


def test_decode_failure_diagnostics():
    alphabet, lex, g, graph = make_setup([("one", ["w", "n"])], ["one"])
    grid = peaked_grid(alphabet, ["w", "n"])
    with pytest.raises(DecodeFailureError) as err:
        decode(grid, graph, beam=0)
    assert err.value.frame is not None


def test_decode_requires_alphabet():
    alphabet, lex, g, graph = make_setup([("one", ["w", "n"])], ["one"])
    grid = peaked_grid(alphabet, ["w", "n"])
    bare = PosteriorGrid(grid.log_probs)
    with pytest.raises(ValueError):
        decode(bare, graph)
