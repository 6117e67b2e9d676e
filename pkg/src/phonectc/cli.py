"""Command-line interface.

Thin wrappers over the library: text normalization, G2P, lexicon building,
tokenizer training, language-model training, decode-graph construction,
acoustic-model training/finetuning, decoding, scoring, synthetic-world
generation, and config-driven experiments.
"""

from __future__ import annotations

import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import click
import numpy as np
import yaml


@click.group()
def main():
    """Phoneme-CTC speech toolkit."""


def _read_lines(path):
    if path is None or path == "-":
        return [l.rstrip("\n") for l in sys.stdin]
    with open(path, encoding="utf-8") as fh:
        return [l.rstrip("\n") for l in fh]


def _write_lines(lines, out):
    if out is None or out == "-":
        for l in lines:
            click.echo(l)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            for l in lines:
                fh.write(l + "\n")


# ----------------------------------------------------------------------
# text


@main.command()
@click.argument("input_file", required=False)
@click.option("-o", "--out", default=None, help="Output file (default stdout).")
@click.option("--keep", default="'", help="Punctuation characters to keep.")
@click.option("--no-lowercase", is_flag=True)
@click.option("--strip-mark", multiple=True, help="Characters to delete.")
@click.option("--reject", multiple=True, help="Regex; matching lines are dropped.")
def normalize(input_file, out, keep, no_lowercase, strip_mark, reject):
    """Normalize text, one sentence per line."""
    from .textnorm import NormRules, Normalized
    from .textnorm import normalize as norm

    rules = NormRules(
        keep_chars=frozenset(keep),
        lowercase=not no_lowercase,
        strip_marks=frozenset(strip_mark),
        reject_patterns=tuple(reject),
    )
    kept = []
    dropped = 0
    for line in _read_lines(input_file):
        result = norm(line, rules)
        if isinstance(result, Normalized):
            kept.append(result.text)
        else:
            dropped += 1
    _write_lines(kept, out)
    if dropped:
        click.echo(f"dropped {dropped} rejected line(s)", err=True)


@main.command()
@click.argument("words", nargs=-1, required=True)
@click.option("--fst", "fst_path", required=True, help="G2P transducer (text format).")
@click.option("--nbest", default=1, show_default=True)
def g2p(words, fst_path, nbest):
    """Print pronunciations: word, phonemes, weight (tab-separated)."""
    from .fst import Fst
    from .textnorm import apply_g2p

    transducer = Fst.read_text(fst_path)
    for word in words:
        prons = apply_g2p(transducer, word, nbest=nbest)
        if not prons:
            click.echo(f"{word}\t<no pronunciation>", err=True)
        for phones, weight in prons:
            click.echo(f"{word}\t{' '.join(phones)}\t{weight}")


@main.command()
@click.option("--g2p", "fst_path", required=True, help="G2P transducer (text format).")
@click.option("--words", "words_file", required=True, help="One word per line.")
@click.option("-o", "--out", required=True, help="Output lexicon TSV.")
@click.option("--nbest", default=1, show_default=True)
@click.option("--stats", is_flag=True, help="Print lexicon statistics as JSON.")
def lexicon(fst_path, words_file, out, nbest, stats):
    """Build a pronunciation lexicon from a word list and a G2P FST."""
    from .fst import Fst
    from .textnorm import build_prolex, lexicon_stats

    transducer = Fst.read_text(fst_path)
    words = [w for w in _read_lines(words_file) if w]
    dropped = []
    lex = build_prolex(words, transducer, nbest=nbest, report=dropped)
    lex.write_tsv(out)
    if dropped:
        click.echo(f"dropped {len(dropped)} unpronounceable word(s)", err=True)
    if stats:
        click.echo(json.dumps(lexicon_stats(lex), sort_keys=True))


# ----------------------------------------------------------------------
# tokenizer


@main.group()
def tokenizer():
    """Subword tokenizer commands."""


@tokenizer.command("train")
@click.option("--input", "inputs", multiple=True, required=True,
              help="Per-language text file; repeatable.")
@click.option("--vocab-size", required=True, type=int)
@click.option("-o", "--out", required=True)
@click.option("--beta", default=0.5, show_default=True,
              help="Language-balancing exponent.")
@click.option("--seed", default=0, show_default=True)
def tokenizer_train(inputs, vocab_size, out, beta, seed):
    """Train a BPE model with language-balanced sampling over the inputs."""
    from .bpe import LanguageStats, sample_corpus, train_bpe

    corpora = {p: [l for l in _read_lines(p) if l.strip()] for p in inputs}
    if len(corpora) > 1:
        stats = LanguageStats(
            counts={p: len(s) for p, s in corpora.items()}, beta=beta
        )
        total = sum(len(s) for s in corpora.values())
        sentences = [s for _, s in sample_corpus(corpora, stats, total, seed)]
    else:
        sentences = next(iter(corpora.values()))
    model = train_bpe(sentences, vocab_size)
    model.save(out)
    click.echo(f"{len(model.vocab) - 1} units, {len(model.merges)} merges")


@tokenizer.command("encode")
@click.argument("input_file", required=False)
@click.option("--model", "model_path", required=True)
@click.option("-o", "--out", default=None)
def tokenizer_encode(input_file, model_path, out):
    """Encode text lines into space-separated subword tokens."""
    from .bpe import BpeModel

    model = BpeModel.load(model_path)
    _write_lines(
        [" ".join(model.encode(l)) for l in _read_lines(input_file)], out
    )


# ----------------------------------------------------------------------
# language model


@main.group()
def lm():
    """N-gram language model commands."""


@lm.command("train")
@click.option("--input", "input_file", required=True, help="Tokenized text.")
@click.option("--order", default=4, show_default=True)
@click.option("-o", "--out", required=True, help="Output ARPA file.")
@click.option("--fst", "fst_out", default=None,
              help="Also export the backoff acceptor FST here.")
@click.option("--lexicon", "lexicon_path", default=None,
              help="Lexicon TSV whose words join the vocabulary even when "
                   "unseen in the text.")
def lm_train(input_file, order, out, fst_out, lexicon_path):
    """Train a Witten-Bell backoff n-gram model."""
    from .ngram import ngram_to_fst, train_ngram

    extra = ()
    if lexicon_path:
        from .textnorm import Prolex

        extra = Prolex.read_tsv(lexicon_path).words()
    sentences = [l.split() for l in _read_lines(input_file) if l.strip()]
    model = train_ngram(sentences, order=order, extra_vocab=extra)
    model.write_arpa(out)
    if fst_out:
        ngram_to_fst(model).write_text(fst_out)
    click.echo(f"{len(model.entries)} n-gram entries")


@lm.command("score")
@click.argument("sentences", nargs=-1, required=True)
@click.option("--arpa", "arpa_path", required=True)
def lm_score(sentences, arpa_path):
    """Log10 probability of each sentence (end token included)."""
    from .ngram import NGramModel

    model = NGramModel.read_arpa(arpa_path)
    for s in sentences:
        click.echo(f"{model.sentence_logprob(s.split())}\t{s}")


# ----------------------------------------------------------------------
# decode graph


@main.group()
def graph():
    """Decode-graph commands."""


@graph.command("build")
@click.option("--inventory", "inventory_path", default=None,
              help="Unit inventory file (phoneme units).")
@click.option("--bpe-model", "bpe_path", default=None,
              help="BPE model (subword units).")
@click.option("--lexicon", "lexicon_path", required=True)
@click.option("--arpa", "arpa_path", required=True)
@click.option("-o", "--out", required=True, help="Output graph (text FST).")
def graph_build(inventory_path, bpe_path, lexicon_path, arpa_path, out):
    """Compose the CTC topology, lexicon, and grammar into one decode graph."""
    from .decodegraph import build_decode_graph
    from .inventory import make_alphabet, read_inventory
    from .ngram import NGramModel, ngram_to_fst
    from .textnorm import Prolex

    if (inventory_path is None) == (bpe_path is None):
        raise click.UsageError("give exactly one of --inventory / --bpe-model")
    if inventory_path:
        alphabet = make_alphabet(read_inventory(inventory_path).units)
    else:
        from .bpe import BpeModel

        alphabet = BpeModel.load(bpe_path).vocab
    lex = Prolex.read_tsv(lexicon_path)
    grammar = ngram_to_fst(NGramModel.read_arpa(arpa_path))
    g = build_decode_graph(alphabet, lex, grammar)
    g.write_text(out)
    click.echo(f"{g.num_states} states")


# ----------------------------------------------------------------------
# world / training / decoding


def _load_world(path):
    from .world import load_world

    return load_world(path)


@main.group()
def world():
    """Synthetic world commands."""


@world.command("gen")
@click.option("-o", "--out", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", default=None,
              help="YAML overriding world-config fields.")
def world_gen(out, seed, config_path):
    """Generate a synthetic multilingual world."""
    from .world import SyntheticWorldConfig, generate_and_write

    overrides = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            overrides = yaml.safe_load(fh) or {}
    known = {f.name for f in dataclass_fields(SyntheticWorldConfig)}
    bad = set(overrides) - known
    if bad:
        raise click.UsageError(f"unknown world config keys: {sorted(bad)}")
    overrides = {
        k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()
    }
    overrides.setdefault("seed", seed)
    config = SyntheticWorldConfig(**overrides)
    generate_and_write(config, out)
    click.echo(f"world written to {out}")


def _pipeline(world_dir, beam, acoustic_scale, lm_order, encoder_cfg=None):
    from .experiment import Pipeline

    return Pipeline(
        _load_world(world_dir), encoder=encoder_cfg, lm_order=lm_order,
        beam=beam, acoustic_scale=acoustic_scale,
    )


@main.command()
@click.option("--world", "world_dir", required=True)
@click.option("--language", default="all-seen", show_default=True,
              help="Language code, or all-seen for pooled multilingual training.")
@click.option("--supervision", type=click.Choice(["phoneme", "subword"]),
              default="phoneme", show_default=True)
@click.option("--bpe-vocab-size", default=90, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--out", required=True, help="Output checkpoint.")
def train(world_dir, language, supervision, bpe_vocab_size, seed, out):
    """Train an acoustic model on a world language (or all seen languages)."""
    from .model import save_checkpoint

    pipe = _pipeline(world_dir, 16, 1.0, 2)
    if language == "all-seen":
        if supervision == "phoneme":
            ckpt, history = pipe.train_multilingual_phoneme(seed)
        else:
            ckpt, history, bpe = pipe.train_multilingual_subword(
                seed, bpe_vocab_size
            )
            bpe.save(str(out) + ".bpe")
    else:
        ckpt, history = pipe.train_monolingual(
            language, seed, supervision=supervision
        )
    save_checkpoint(ckpt, out)
    last = history["epochs"][-1]
    click.echo(
        f"epochs={last['epoch']} train_loss={last['train_loss']:.4f} "
        f"val_loss={last['val_loss']:.4f}"
    )


@main.command()
@click.option("--world", "world_dir", required=True)
@click.option("--pretrained", "pretrained_path", required=True)
@click.option("--language", required=True)
@click.option("--mode", type=click.Choice(["copy_shared", "random_all"]),
              default="copy_shared", show_default=True)
@click.option("--utterances", default=0, show_default=True,
              help="Finetuning utterance budget; 0 = full training split.")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--out", required=True, help="Output checkpoint.")
def finetune(world_dir, pretrained_path, language, mode, utterances, seed, out):
    """Finetune a pretrained model on a target language with embedding transfer."""
    from .model import load_checkpoint, save_checkpoint

    pipe = _pipeline(world_dir, 16, 1.0, 2)
    base = load_checkpoint(pretrained_path)
    n = utterances or None
    ckpt, history = pipe.finetune(base, language, seed, n_utts=n, mode=mode)
    save_checkpoint(ckpt, out)
    click.echo(f"epochs={history['epochs'][-1]['epoch']}")


@main.command()
@click.option("--checkpoint", "ckpt_path", required=True)
@click.option("--features", "feats_path", required=True,
              help="Feature file (single matrix or utterance set).")
@click.option("--graph", "graph_path", default=None,
              help="Decode graph (text FST) for word output.")
@click.option("--lexicon-free", is_flag=True,
              help="Prefix beam search over units instead of graph decoding.")
@click.option("--beam", default=16, show_default=True)
@click.option("--acoustic-scale", default=1.0, show_default=True)
@click.option("-o", "--out", default=None)
def decode(ckpt_path, feats_path, graph_path, lexicon_free, beam,
           acoustic_scale, out):
    """Decode feature matrices into word or unit sequences."""
    from .ctc import prefix_beam_search
    from .decodegraph import DecodeFailureError
    from .decodegraph import decode as graph_decode
    from .featio import FEAT_MAGIC, read_feature_matrix, read_feature_set
    from .fst import Fst
    from .model import forward, load_checkpoint

    if bool(graph_path) == lexicon_free:
        raise click.UsageError("give exactly one of --graph / --lexicon-free")
    ckpt = load_checkpoint(ckpt_path)
    with open(feats_path, "rb") as fh:
        magic = fh.read(4)
    if magic == FEAT_MAGIC:
        mats = [read_feature_matrix(feats_path)]
    else:
        mats = read_feature_set(feats_path)
    g = Fst.read_text(graph_path) if graph_path else None
    lines = []
    for feats in mats:
        grid = forward(ckpt, feats)
        if lexicon_free:
            hyps = prefix_beam_search(grid, beam_width=beam)
            lines.append(" ".join(ckpt.alphabet.decode(hyps[0][0])))
        else:
            try:
                words, _ = graph_decode(
                    grid, g, beam=beam, acoustic_scale=acoustic_scale
                )
                lines.append(" ".join(words))
            except DecodeFailureError as err:
                lines.append("")
                click.echo(f"decode failure: {err}", err=True)
    _write_lines(lines, out)


@main.command("eval")
@click.option("--ref", "ref_path", required=True, help="Reference text.")
@click.option("--hyp", "hyp_path", required=True, help="Hypothesis text.")
@click.option("--unit", type=click.Choice(["word", "char"]), default="word",
              show_default=True)
def eval_cmd(ref_path, hyp_path, unit):
    """Pooled error rate between line-aligned reference and hypothesis files."""
    from .metrics import corpus_rate

    refs = _read_lines(ref_path)
    hyps = _read_lines(hyp_path)
    if len(refs) != len(hyps):
        raise click.UsageError(
            f"line count mismatch: {len(refs)} references, {len(hyps)} hypotheses"
        )
    if unit == "word":
        pairs = [(r.split(), h.split()) for r, h in zip(refs, hyps)]
    else:
        pairs = [(list(r.replace(" ", "")), list(h.replace(" ", "")))
                 for r, h in zip(refs, hyps)]
    click.echo(f"{corpus_rate(pairs):.2f}")


@main.group()
def embeddings():
    """Unit-embedding commands."""


@embeddings.command("export")
@click.option("--checkpoint", "ckpt_path", required=True)
@click.option("-o", "--out", required=True, help="Output TSV.")
def embeddings_export(ckpt_path, out):
    """Write one unit embedding per line: symbol, then the vector."""
    from .model import load_checkpoint, write_embeddings_tsv

    write_embeddings_tsv(load_checkpoint(ckpt_path), out)
    click.echo(f"embeddings written to {out}")


# ----------------------------------------------------------------------
# experiments


@main.group()
def experiment():
    """Config-driven experiment commands."""


@experiment.command("run")
@click.option("--world", "world_dir", required=True)
@click.option("--config", "config_path", required=True, help="Experiment YAML.")
@click.option("-o", "--out", default=None, help="Override output directory.")
def experiment_run(world_dir, config_path, out):
    """Run one experiment config against a world."""
    from .experiment import ExperimentConfig, run_experiment

    with open(config_path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    known = {f.name for f in dataclass_fields(ExperimentConfig)}
    bad = set(raw) - known
    if bad:
        raise click.UsageError(f"unknown experiment config keys: {sorted(bad)}")
    raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    if out:
        raw["output_dir"] = out
    try:
        config = ExperimentConfig(**raw)
    except (TypeError, ValueError) as err:
        raise click.UsageError(str(err))
    report = run_experiment(_load_world(world_dir), config)
    click.echo(json.dumps(report, ensure_ascii=False, sort_keys=True))


if __name__ == "__main__":
    main()
