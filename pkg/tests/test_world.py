import numpy as np
import pytest

from phonectc.featio import (
    read_feature_matrix,
    read_feature_set,
    write_feature_matrix,
    write_feature_set,
)
from phonectc.textnorm import apply_g2p, lexicon_stats
from phonectc.world import (
    SyntheticWorldConfig,
    WorldError,
    generate_world,
    load_world,
    write_world,
)

SMALL = SyntheticWorldConfig(
    num_seen_languages=3,
    num_unseen=1,
    utterances_per_language=20,
    low_resource_utterances=10,
    seed=5,
)


@pytest.fixture(scope="module")
def world():
    return generate_world(SMALL)


def test_feature_matrix_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=(7, 3)).astype(np.float32)
    p = tmp_path / "f.bin"
    write_feature_matrix(p, x)
    back = read_feature_matrix(p)
    assert back.shape == (7, 3)
    assert np.allclose(back, x, atol=1e-7)


def test_feature_set_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    mats = [rng.normal(size=(t, 4)) for t in (3, 9, 1)]
    p = tmp_path / "s.bin"
    write_feature_set(p, mats)
    back = read_feature_set(p)
    assert len(back) == 3
    for a, b in zip(mats, back):
        assert np.allclose(a, b, atol=1e-6)


def test_feature_magic_checked(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"JUNKJUNK")
    with pytest.raises(ValueError):
        read_feature_matrix(p)
    with pytest.raises(ValueError):
        read_feature_set(p)


def test_world_shape(world):
    assert world.seen_codes == ["s1", "s2", "s3"]
    assert world.unseen_codes == ["u1"]
    cfg = world.config
    for code, lang in world.languages.items():
        lo, hi = cfg.inventory_size_range
        assert lo <= len(lang.inventory) <= hi
        assert all(s for s in lang.sentences["train"])
        if code == "s3":  # low-resource: capped train, full dev/test
            assert len(lang.sentences["train"]) <= cfg.low_resource_utterances
        total = sum(len(lang.sentences[s]) for s in ("train", "dev", "test"))
        if code != "s3":
            assert total == cfg.utterances_per_language


def test_sentences_use_lexicon_words(world):
    for lang in world.languages.values():
        for split in ("train", "dev", "test"):
            for sent in lang.sentences[split]:
                assert all(w in lang.prolex for w in sent.split())


def test_features_align_with_transcripts(world):
    cfg = world.config
    lo, hi = cfg.frames_per_phoneme_range
    for lang in world.languages.values():
        for sent, feats in zip(lang.sentences["train"], lang.features["train"]):
            n = len(lang.phoneme_transcript(sent))
            assert lo * n <= feats.shape[0] <= hi * n
            assert feats.shape[1] == cfg.feature_dim


def test_unseen_inventory_within_seen_union(world):
    union = set()
    for c in world.seen_codes:
        union |= world.languages[c].inventory.units
    assert world.languages["u1"].inventory.units <= union


def test_g2p_consistent_with_lexicon(world):
    lang = world.languages["s1"]
    for word in list(lang.prolex.words())[:5]:
        prons = apply_g2p(lang.g2p, word)
        assert prons and prons[0][0] == lang.prolex.best_pronunciation(word)[0]


def test_homophone_rate_zero_config():
    cfg = SyntheticWorldConfig(
        num_seen_languages=2, num_unseen=0, homophone_rate=0.0,
        utterances_per_language=10, low_resource_utterances=10, seed=3,
    )
    w = generate_world(cfg)
    for lang in w.languages.values():
        assert lexicon_stats(lang.prolex)["homophone_rate"] == 0.0


def test_noiseless_features_depend_only_on_phonemes():
    cfg = SyntheticWorldConfig(
        num_seen_languages=1, num_unseen=0, feature_noise_std=0.0,
        frames_per_phoneme_range=(2, 2), utterances_per_language=10,
        low_resource_utterances=10, seed=4,
    )
    w = generate_world(cfg)
    lang = next(iter(w.languages.values()))
    proto = {u: w.prototypes[w.universal.index(u)] for u in lang.inventory.units}
    sent = lang.sentences["train"][0]
    feats = lang.features["train"][0]
    want = np.repeat(
        [proto[p] for p in lang.phoneme_transcript(sent)], 2, axis=0
    )
    assert np.allclose(feats, want)


def test_world_determinism_byte_identical(tmp_path):
    d1 = write_world(generate_world(SMALL), tmp_path / "w1")
    d2 = write_world(generate_world(SMALL), tmp_path / "w2")
    files1 = sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(d2) for p in d2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes()


def test_world_directory_roundtrip(tmp_path, world):
    out = write_world(world, tmp_path / "w")
    back = load_world(out)
    assert back.config == world.config
    assert set(back.languages) == set(world.languages)
    for code in world.languages:
        a, b = world.languages[code], back.languages[code]
        assert a.inventory.units == b.inventory.units
        assert a.sentences == b.sentences
        for x, y in zip(a.features["dev"], b.features["dev"]):
            assert np.allclose(x, y, atol=1e-6)
        assert b.phoneme_transcript(b.sentences["test"][0]) == a.phoneme_transcript(
            a.sentences["test"][0]
        )


def test_config_validation():
    with pytest.raises(WorldError):
        SyntheticWorldConfig(universal_inventory_size=999)
    with pytest.raises(WorldError):
        SyntheticWorldConfig(inventory_size_range=(5, 3))
    with pytest.raises(WorldError):
        SyntheticWorldConfig(split_fractions=(0.5, 0.2, 0.2))
