"""Experiment orchestration over synthetic worlds.

A :class:`Pipeline` wraps one world with caches for decode graphs and
grammars, and exposes the training/evaluation primitives: monolingual and
multilingual training under phoneme or subword supervision, crosslingual
finetuning with embedding transfer, PER via prefix beam search, WER via
decoding the composed T o L o G graph, and catastrophic-forgetting WARD.
``run_experiment`` drives those primitives from a config and writes
results.csv / report.json / history.csv.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bpe import BpeModel, LanguageStats, sample_corpus, train_bpe
from .ctc import prefix_beam_search
from .decodegraph import DecodeFailureError, build_decode_graph, decode
from .inventory import Alphabet, build_union_alphabet, make_alphabet
from .metrics import corpus_rate, ward
from .model import (
    EncoderConfig,
    TrainSchedule,
    forward,
    init_checkpoint,
    train,
    transfer_init,
)
from .ngram import train_ngram, ngram_to_fst
from .textnorm import Prolex


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str  # monolingual | multilingual_phoneme | multilingual_subword | crosslingual_ft
    supervision: str = "phoneme"  # phoneme | subword
    languages: tuple = ()  # empty = all seen languages
    ft_language: str = ""
    ft_data_scales: tuple = ()  # utterance counts; 0 = full training set
    init_mode: str = "copy_shared"  # copy_shared | random_all | scratch
    pretrained_path: str = ""
    seed: int = 0
    encoder: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    bpe_vocab_size: int = 90
    lm_order: int = 2
    beam: int = 16
    acoustic_scale: float = 1.0
    forgetting_eval: bool = False
    forgetting_utterances: int = 20
    output_dir: str = "results"

    def __post_init__(self):
        modes = (
            "monolingual",
            "multilingual_phoneme",
            "multilingual_subword",
            "crosslingual_ft",
        )
        if self.mode not in modes:
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.mode == "crosslingual_ft" and self.init_mode != "scratch":
            if not self.pretrained_path:
                raise ValueError("crosslingual_ft needs a pretrained checkpoint")


DEFAULT_ENCODER = dict(input_dim=10, hidden_dim=16, num_blocks=1,
                       subsample_stride=2, dropout=0.0)
DEFAULT_SCHEDULE = dict(peak_lr=4e-2, batch_size=16, max_epochs=60,
                        early_stop_patience=10, avg_top_k=3)


def make_schedule(n_utts, **overrides):
    opts = {**DEFAULT_SCHEDULE, **overrides}
    batches = -(-max(1, n_utts) // opts["batch_size"])
    opts.setdefault("total_steps", opts["max_epochs"] * batches)
    return TrainSchedule(**opts)


class Pipeline:
    def __init__(self, world, encoder=None, lm_order=2, beam=16,
                 acoustic_scale=1.0):
        self.world = world
        enc = {**DEFAULT_ENCODER, **(encoder or {})}
        enc["input_dim"] = world.config.feature_dim
        self.encoder_config = EncoderConfig(**enc)
        self.lm_order = lm_order
        self.beam = beam
        self.acoustic_scale = acoustic_scale
        self._grammar_cache = {}
        self._graph_cache = {}

    # ------------------------------------------------------------------
    # corpora

    def phoneme_alphabet(self, codes):
        return build_union_alphabet(
            [self.world.languages[c].inventory for c in codes]
        )

    def phoneme_corpus(self, code, split, alphabet, limit=None):
        lang = self.world.languages[code]
        out = []
        for sent, feats in zip(lang.sentences[split], lang.features[split]):
            labels = alphabet.encode(lang.phoneme_transcript(sent))
            out.append((feats, labels))
        return out[:limit] if limit else out

    def subword_corpus(self, code, split, bpe, alphabet, limit=None):
        lang = self.world.languages[code]
        out = []
        for sent, feats in zip(lang.sentences[split], lang.features[split]):
            pieces = [
                t
                for w in sent.split()
                for t in bpe._encode_word(w)
            ]
            out.append((feats, alphabet.encode(pieces)))
        return out[:limit] if limit else out

    # ------------------------------------------------------------------
    # training

    def train_monolingual(self, code, seed, supervision="phoneme", bpe=None,
                          limit=None, alphabet=None, **sched):
        if supervision == "phoneme":
            if alphabet is None:
                alphabet = self.phoneme_alphabet([code])
            corpus = self.phoneme_corpus(code, "train", alphabet, limit)
            val = self.phoneme_corpus(code, "dev", alphabet)
        else:
            alphabet = alphabet if alphabet is not None else bpe.vocab
            corpus = self.subword_corpus(code, "train", bpe, alphabet, limit)
            val = self.subword_corpus(code, "dev", bpe, alphabet)
        schedule = make_schedule(len(corpus), **sched)
        ckpt = init_checkpoint(self.encoder_config, alphabet, seed=seed)
        return train(ckpt, corpus, schedule, seed, val_corpus=val)

    def train_multilingual_phoneme(self, seed, **sched):
        codes = self.world.seen_codes
        alphabet = self.phoneme_alphabet(codes)
        corpus = []
        val = []
        for c in codes:
            corpus.extend(self.phoneme_corpus(c, "train", alphabet))
            val.extend(self.phoneme_corpus(c, "dev", alphabet))
        schedule = make_schedule(len(corpus), **sched)
        ckpt = init_checkpoint(self.encoder_config, alphabet, seed=seed)
        return train(ckpt, corpus, schedule, seed, val_corpus=val)

    def train_bpe_model(self, seed, vocab_size, beta=0.5):
        codes = self.world.seen_codes
        corpora = {c: self.world.languages[c].sentences["train"] for c in codes}
        stats = LanguageStats(
            counts={c: len(corpora[c]) for c in codes}, beta=beta
        )
        total = sum(len(s) for s in corpora.values())
        sampled = sample_corpus(corpora, stats, total, seed)
        chars = {
            ch
            for c in codes
            for word in self.world.languages[c].prolex.words()
            for ch in word
        }
        return train_bpe([s for _, s in sampled], vocab_size, extra_chars=chars)

    def train_multilingual_subword(self, seed, vocab_size, **sched):
        bpe = self.train_bpe_model(seed, vocab_size)
        alphabet = bpe.vocab
        corpus = []
        val = []
        for c in self.world.seen_codes:
            corpus.extend(self.subword_corpus(c, "train", bpe, alphabet))
            val.extend(self.subword_corpus(c, "dev", bpe, alphabet))
        schedule = make_schedule(len(corpus), **sched)
        ckpt = init_checkpoint(self.encoder_config, alphabet, seed=seed)
        final, history = train(ckpt, corpus, schedule, seed, val_corpus=val)
        return final, history, bpe

    def finetune(self, pretrained, code, seed, n_utts=None, mode="copy_shared",
                 supervision="phoneme", bpe=None, alphabet=None, **sched):
        """Transfer-init (or reuse) and finetune on a target language."""
        if supervision == "phoneme":
            if alphabet is None:
                alphabet = self.phoneme_alphabet([code])
            corpus = self.phoneme_corpus(code, "train", alphabet, n_utts)
            val = self.phoneme_corpus(code, "dev", alphabet)
        else:
            alphabet = alphabet if alphabet is not None else bpe.vocab
            corpus = self.subword_corpus(code, "train", bpe, alphabet, n_utts)
            val = self.subword_corpus(code, "dev", bpe, alphabet)
        ckpt = transfer_init(pretrained, alphabet, mode, seed)
        schedule = make_schedule(len(corpus), **sched)
        return train(ckpt, corpus, schedule, seed, val_corpus=val)

    def train_scratch(self, code, seed, n_utts=None, supervision="phoneme",
                      bpe=None, alphabet=None, **sched):
        return self.train_monolingual(
            code, seed, supervision=supervision, bpe=bpe, limit=n_utts,
            alphabet=alphabet, **sched,
        )

    # ------------------------------------------------------------------
    # evaluation

    def eval_per(self, ckpt, code, split="test"):
        """Phoneme error rate via prefix beam search (no lexicon)."""
        lang = self.world.languages[code]
        pairs = []
        for sent, feats in zip(lang.sentences[split], lang.features[split]):
            ref = list(lang.phoneme_transcript(sent))
            grid = forward(ckpt, feats)
            hyps = prefix_beam_search(grid, beam_width=self.beam)
            hyp = ckpt.alphabet.decode(hyps[0][0]) if hyps else []
            pairs.append((ref, hyp))
        return corpus_rate(pairs)

    def _grammar(self, code):
        key = (code, self.lm_order)
        if key not in self._grammar_cache:
            lang = self.world.languages[code]
            sents = [s.split() for s in lang.sentences["train"]]
            model = train_ngram(
                sents, order=self.lm_order, extra_vocab=lang.prolex.words()
            )
            self._grammar_cache[key] = ngram_to_fst(model)
        return self._grammar_cache[key]

    def _decode_graph(self, code, alphabet, supervision, bpe=None):
        key = (code, alphabet.units, supervision)
        if key not in self._graph_cache:
            lang = self.world.languages[code]
            if supervision == "phoneme":
                lex = lang.prolex
            else:
                lex = Prolex()
                for word in lang.prolex.words():
                    lex.add(word, bpe._encode_word(word), 0.0)
            # drop entries whose units the model cannot emit
            usable = Prolex()
            for word, prons in lex.entries.items():
                for phones, w in prons:
                    if all(p in alphabet for p in phones):
                        usable.add(word, phones, w)
            self._graph_cache[key] = build_decode_graph(
                alphabet, usable, self._grammar(code)
            )
        return self._graph_cache[key]

    def eval_wer(self, ckpt, code, split="test", supervision="phoneme",
                 bpe=None):
        """Word error rate via T o L o G decoding; failed decodes count as
        empty hypotheses."""
        lang = self.world.languages[code]
        graph = self._decode_graph(code, ckpt.alphabet, supervision, bpe)
        pairs = []
        failures = 0
        for sent, feats in zip(lang.sentences[split], lang.features[split]):
            grid = forward(ckpt, feats)
            try:
                words, _ = decode(
                    grid, graph, beam=self.beam,
                    acoustic_scale=self.acoustic_scale,
                )
            except DecodeFailureError:
                words = []
                failures += 1
            pairs.append((sent.split(), words))
        return corpus_rate(pairs), failures

    def avg_seen_wer(self, ckpt, split="test", supervision="phoneme", bpe=None):
        wers = [
            self.eval_wer(ckpt, c, split, supervision, bpe)[0]
            for c in self.world.seen_codes
        ]
        return float(np.mean(wers))

    def forgetting_ward(self, pretrained, ft_ckpt, supervision="phoneme",
                        bpe=None, split="test"):
        before = self.avg_seen_wer(pretrained, split, supervision, bpe)
        after = self.avg_seen_wer(ft_ckpt, split, supervision, bpe)
        return ward(after, min(before, 99.999)), before, after


# ----------------------------------------------------------------------
# config-driven runner


def run_experiment(world, config):
    """Execute one experiment config; returns the report dictionary and
    writes results.csv / report.json / history.csv to the output directory."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(
        world, encoder=config.encoder, lm_order=config.lm_order,
        beam=config.beam, acoustic_scale=config.acoustic_scale,
    )
    rows = []  # (experiment, language, scale, split, metric, value)
    histories = []
    report = {"mode": config.mode, "seed": config.seed, "results": []}

    def record(language, scale, split, metric, value, history=None):
        rows.append((config.mode, language, scale, split, metric, value))
        report["results"].append(
            dict(language=language, scale=scale, split=split, metric=metric,
                 value=value)
        )
        if history is not None:
            histories.append((language, scale, history))

    sched = dict(config.schedule)
    if config.mode == "monolingual":
        codes = list(config.languages) or world.seen_codes
        for code in codes:
            final, history = pipe.train_monolingual(
                code, config.seed, supervision=config.supervision, **sched
            )
            _eval_and_record(pipe, final, code, "full", config, record, history)
    elif config.mode == "multilingual_phoneme":
        final, history = pipe.train_multilingual_phoneme(config.seed, **sched)
        for code in world.seen_codes:
            _eval_and_record(pipe, final, code, "full", config, record,
                             history if code == world.seen_codes[0] else None)
        _save_ckpt(final, out_dir / "multilingual_phoneme.ckpt")
    elif config.mode == "multilingual_subword":
        final, history, bpe = pipe.train_multilingual_subword(
            config.seed, config.bpe_vocab_size, **sched
        )
        for code in world.seen_codes:
            wer_val, fails = pipe.eval_wer(
                final, code, "test", "subword", bpe
            )
            record(code, "full", "test", "wer", wer_val)
            if fails:
                record(code, "full", "test", "decode_failures", fails)
        histories.append((world.seen_codes[0], "full", history))
        _save_ckpt(final, out_dir / "multilingual_subword.ckpt")
        bpe.save(out_dir / "bpe.model")
    else:  # crosslingual_ft
        code = config.ft_language or world.unseen_codes[0]
        scales = list(config.ft_data_scales) or [0]
        base = None
        bpe = None
        if config.init_mode != "scratch":
            from .model import load_checkpoint

            base = load_checkpoint(config.pretrained_path)
        if config.supervision == "subword":
            bpe = pipe.train_bpe_model(config.seed, config.bpe_vocab_size)
        ft_alphabet = None
        if (config.supervision == "phoneme" and config.forgetting_eval
                and base is not None):
            # union alphabet keeps the seen languages decodable after FT
            from .inventory import make_alphabet

            units = set(base.alphabet.units[1:]) | set(
                world.languages[code].inventory.units
            )
            ft_alphabet = make_alphabet(units)
        for scale in scales:
            n = None if scale in (0, "all") else int(scale)
            if config.init_mode == "scratch":
                final, history = pipe.train_scratch(
                    code, config.seed, n_utts=n,
                    supervision=config.supervision, bpe=bpe, **sched
                )
            else:
                final, history = pipe.finetune(
                    base, code, config.seed, n_utts=n, mode=config.init_mode,
                    supervision=config.supervision, bpe=bpe,
                    alphabet=ft_alphabet, **sched
                )
            label = "full" if n is None else str(n)
            _eval_and_record(pipe, final, code, label, config, record, history,
                             bpe=bpe)
            if config.forgetting_eval and base is not None:
                w, before, after = pipe.forgetting_ward(
                    base, final, supervision=config.supervision, bpe=bpe
                )
                record(code, label, "test", "ward", w)
                record(code, label, "test", "seen_wer_before", before)
                record(code, label, "test", "seen_wer_after", after)

    _write_outputs(out_dir, rows, histories, report)
    return report


def _eval_and_record(pipe, ckpt, code, scale, config, record, history,
                     bpe=None):
    if config.supervision == "phoneme":
        for split in ("dev", "test"):
            record(code, scale, split, "per", pipe.eval_per(ckpt, code, split))
    for split in ("dev", "test"):
        wer_val, fails = pipe.eval_wer(
            ckpt, code, split, config.supervision, bpe
        )
        record(code, scale, split, "wer", wer_val, history if split == "dev" else None)
        if fails:
            record(code, scale, split, "decode_failures", fails)


def _save_ckpt(ckpt, path):
    from .model import save_checkpoint

    save_checkpoint(ckpt, path)


def _write_outputs(out_dir, rows, histories, report):
    with open(out_dir / "results.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["experiment", "language", "scale", "split", "metric", "value"]
        )
        writer.writerows(rows)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["language", "scale", "epoch", "train_loss", "val_loss",
             "epochs_to_converge"]
        )
        for language, scale, history in histories:
            if history is None:
                continue
            for row in history["epochs"]:
                writer.writerow(
                    [language, scale, row["epoch"], row["train_loss"],
                     row["val_loss"], history["epochs_to_converge"]]
                )
