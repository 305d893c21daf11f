import numpy as np
import pytest

from dualbranch.data import (
    Corpus,
    CorpusSpec,
    CorpusSplit,
    Protocol,
    build_split,
    export_corpus,
    generate_domain,
    generate_fake,
    generate_real,
    import_corpus,
    read_manifest,
    sample_stream,
)
from dualbranch.errors import ConfigError, IngestionError
from dualbranch.spectral import DOMAINS, FAKE, REAL, fft2d, grayscale_array, high_frequency_energy

SMALL = CorpusSpec(samples_per_domain_per_class=20, seed=5)


def fake_and_base(family, sid="probe", spec=CorpusSpec()):
    fake = generate_fake(spec, family, sample_stream(spec.seed, sid), sid)
    base = generate_fake(spec, family, sample_stream(spec.seed, sid), sid, strength=0.0)
    return fake.pixels, base.pixels


def test_real_images_are_valid_and_deterministic():
    a = generate_real(SMALL, sample_stream(1, "x"))
    b = generate_real(SMALL, sample_stream(1, "x"))
    c = generate_real(SMALL, sample_stream(2, "x"))
    assert a.pixels.min() >= 0 and a.pixels.max() <= 1
    assert a.pixels.tobytes() == b.pixels.tobytes()
    assert a.pixels.tobytes() != c.pixels.tobytes()


def test_streams_do_not_depend_on_order():
    first = sample_stream(3, "T2I-like-real-00001").random(4)
    sample_stream(3, "T2I-like-real-00000").random(100)
    assert np.array_equal(first, sample_stream(3, "T2I-like-real-00001").random(4))


def test_zero_strength_returns_base():
    for family in DOMAINS:
        base = generate_real(CorpusSpec(), sample_stream(0, "probe"))
        fake, _ = fake_and_base(family, spec=CorpusSpec(artifact_strength={family: 1.0}))
        _, zero = fake_and_base(family)
        assert np.array_equal(zero, base.pixels)
        assert not np.array_equal(fake, zero)


def test_unknown_family():
    with pytest.raises(ConfigError):
        generate_fake(SMALL, "GAN-like", sample_stream(0, "x"))


@pytest.mark.parametrize("sid", ["a", "b", "c", "d", "e"])
def test_grid_tones_dominate_base_spectrum(sid):
    fake, base = fake_and_base("T2I-like", sid)
    mf, mb = np.abs(fft2d(grayscale_array(fake))), np.abs(fft2d(grayscale_array(base)))
    ratio = mf / np.maximum(mb, 1e-12)
    # one row tone and one column tone, each with its conjugate bin
    assert np.sum(ratio >= 10) >= 4


@pytest.mark.parametrize("sid", ["a", "b", "c", "d", "e"])
def test_swap_changes_only_a_rectangle(sid):
    fake, base = fake_and_base("FS-like", sid)
    rows, cols = np.nonzero(np.any(fake != base, axis=2))
    h, w = rows.max() - rows.min() + 1, cols.max() - cols.min() + 1
    assert h <= 16 and w <= 16
    # the seam is the rectangle border
    assert np.all(fake[rows.min(), cols.min() : cols.max() + 1] != base[rows.min(), cols.min() : cols.max() + 1])


def test_upscale_has_2x2_blocks():
    fake, _ = fake_and_base("I2I-like")
    blocks = fake.reshape(16, 2, 16, 2, 3)
    assert np.allclose(blocks, blocks[:, :1, :, :1], atol=1e-12)


def test_domain_is_balanced_with_unique_ids():
    samples = generate_domain(SMALL, "FE-like")
    labels = [s.label for s in samples]
    assert labels.count(REAL) == labels.count(FAKE) == 20
    assert len({s.id for s in samples}) == 40
    assert all(s.domain == "FE-like" for s in samples)


def test_corpus_generation_is_pure():
    a = generate_domain(SMALL, "T2I-like")
    b = Corpus(SMALL).domain("T2I-like")
    assert [s.id for s in a] == [s.id for s in b]
    assert all(x.pixels.tobytes() == y.pixels.tobytes() for x, y in zip(a, b))


def test_high_frequency_energy_separates_grid_fakes():
    samples = generate_domain(CorpusSpec(samples_per_domain_per_class=1000), "T2I-like")
    energy = high_frequency_energy(np.stack([s.pixels for s in samples]))
    labels = np.array([s.label for s in samples])
    assert energy[labels == REAL].mean() < energy[labels == FAKE].mean()
    # best single threshold on the energy ratio
    order = np.sort(energy)
    best = max(np.mean((energy > t) == (labels == FAKE)) for t in (order[:-1] + order[1:]) / 2)
    assert best > 0.9


def test_in_domain_split():
    spec = CorpusSpec(samples_per_domain_per_class=500)
    split = build_split(spec, Protocol("in-domain", "I2I-like"))
    assert len(split.train) == 800 and len(split.test) == 200
    for part in (split.train, split.test):
        assert sum(s.label for s in part) * 2 == len(part)
    ids = [s.id for s in split.train + split.test]
    assert len(ids) == len(set(ids)) == 1000


def test_cross_domain_split():
    split = build_split(SMALL, Protocol("cross-domain", "T2I-like", "FS-like"))
    assert {s.domain for s in split.train} == {"T2I-like"}
    assert {s.domain for s in split.test} == {"FS-like"}
    assert not any(s.domain == "FS-like" and s.label == FAKE for s in split.train)
    with pytest.raises(ConfigError):
        build_split(SMALL, Protocol("cross-domain", "FS-like", "FS-like"))


def test_split_rejects_overlap():
    s = generate_domain(SMALL, "T2I-like")
    with pytest.raises(ConfigError):
        CorpusSplit(s[:3], s[2:5], Protocol())


@pytest.mark.parametrize(
    "changes", [{"image_size": 24}, {"samples_per_domain_per_class": 0}, {"artifact_strength": {"T2I-like": 1.5}}, {"artifact_strength": {"X": 1.0}}]
)
def test_spec_validation(changes):
    with pytest.raises(ConfigError):
        CorpusSpec(**changes).validate()


# -- export / import ---------------------------------------------------------


def test_round_trip(tmp_path):
    split = build_split(Corpus(SMALL), Protocol("in-domain", "FS-like"))
    manifest = export_corpus(split, tmp_path)
    lines = manifest.read_text().splitlines()
    assert lines[0].startswith("# dualbranch-corpus v1")
    assert len(lines) - 2 == len(split.train) + len(split.test)
    back = import_corpus(tmp_path)
    assert back.protocol == split.protocol
    for a, b in zip(split.train + split.test, back.train + back.test):
        assert (a.id, a.label, a.domain) == (b.id, b.label, b.domain)
        assert np.max(np.abs(a.pixels - b.pixels)) <= 1 / 255
    export_corpus(back, tmp_path / "again")
    assert (tmp_path / "again" / "manifest.tsv").read_text() == manifest.read_text()


def test_import_errors(tmp_path):
    with pytest.raises(IngestionError, match="manifest"):
        import_corpus(tmp_path)
    split = build_split(Corpus(CorpusSpec(samples_per_domain_per_class=3)), Protocol())
    export_corpus(split, tmp_path)
    victim = tmp_path / "T2I-like" / "train" / f"{split.train[0].id}.png"
    victim.write_bytes(b"garbage")
    with pytest.raises(IngestionError, match=victim.name):
        import_corpus(tmp_path)
    victim.unlink()
    with pytest.raises(IngestionError, match=victim.name):
        import_corpus(tmp_path)
    (tmp_path / "manifest.tsv").write_text("id\tlabel\tdomain\tsplit\n")
    with pytest.raises(IngestionError, match="header"):
        read_manifest(tmp_path)
