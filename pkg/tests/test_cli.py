import numpy as np
import pytest

from dualbranch.autodiff import load_raw
from dualbranch.cli import main
from dualbranch.spectral import png_to_pixels, pixels_to_png

SMALL = ["--set", "corpus.samples_per_domain_per_class=10", "--set", "epochs=1", "--set", "batch_size=8"]


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("gen-corpus", "train", "eval", "ablate", "cross-domain", "gradcheck", "spectrum"):
        assert cmd in out


def test_train_help_documents_flags(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    out = capsys.readouterr().out
    for flag in ("--config", "--seed", "--out", "--set"):
        assert flag in out


def test_unknown_flag_and_command(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code != 0


def test_missing_config_names_path(capsys, tmp_path):
    path = tmp_path / "missing.cfg"
    assert main(["train", "--config", str(path)]) != 0
    assert str(path) in capsys.readouterr().err


def test_invalid_override_names_field(capsys):
    assert main(["train", "--set", "loss.tau=0"]) != 0
    assert "loss.tau" in capsys.readouterr().err


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck", "--scope", "losses", "--trials", "2"]) == 0
    assert "all 4 targets passed" in capsys.readouterr().out


def test_gradcheck_exit_nonzero_on_failure(monkeypatch, capsys):
    import dualbranch.autodiff.ops as ops

    monkeypatch.setattr(ops, "_sigmoid_grad", lambda y: 1.1 * y * (1.0 - y))
    assert main(["gradcheck", "--scope", "ops", "--trials", "2"]) == 1
    assert "sigmoid" in capsys.readouterr().err


def test_spectrum_of_constant_gray(tmp_path):
    img = tmp_path / "gray.png"
    pixels_to_png(np.full((16, 16), 0.5), img)
    assert main(["spectrum", str(img), "--out", str(tmp_path / "out")]) == 0
    spec = png_to_pixels(tmp_path / "out" / "gray_spectrum.png")[..., 0]
    assert spec[8, 8] == 1.0
    spec[8, 8] = 0
    assert np.all(spec == 0)
    raw = load_raw(tmp_path / "out" / "gray_spectrum.raw")
    assert raw.shape == (16, 16)
    assert raw[8, 8] == pytest.approx(np.log1p(128 / 255 * 256))


def test_spectrum_missing_image(tmp_path, capsys):
    assert main(["spectrum", str(tmp_path / "none.png"), "--out", str(tmp_path)]) == 2
    assert "none.png" in capsys.readouterr().err


def test_corpus_train_eval_pipeline(tmp_path, capsys):
    corpus, run = tmp_path / "corpus", tmp_path / "run"
    assert main(["gen-corpus", "--out", str(corpus)] + SMALL) == 0
    assert (corpus / "manifest.tsv").is_file()
    assert main(["train", "--corpus", str(corpus), "--out", str(run), "--seed", "4"] + SMALL) == 0
    for name in ("metrics.csv", "report.json", "config.json", "checkpoint.bin"):
        assert (run / name).is_file()
    capsys.readouterr()
    args = ["eval", "--config", str(run / "config.json"), "--checkpoint", str(run / "checkpoint.bin")]
    assert main(args + ["--corpus", str(corpus)]) == 0
    assert "T2I-like" in capsys.readouterr().out
    # checkpoint from a different architecture
    assert main(args + ["--set", "model.head_hidden=4"]) == 2
    assert "error" in capsys.readouterr().err
