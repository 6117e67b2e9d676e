"""Desk-scale multilingual/crosslingual phoneme-CTC toolkit.

Subpackages cover unit inventories, text normalization and G2P lexicon
construction, BPE tokenization with language-balanced sampling, exact CTC
loss/gradient and decoding, a weighted-FST decode cascade with an n-gram
grammar, a minimal trainable acoustic encoder with crosslingual transfer
initialization, error-rate metrics, and a synthetic multilingual world
generator for end-to-end experiments.
"""

__version__ = "0.1.0"

BLANK = "<b>"
