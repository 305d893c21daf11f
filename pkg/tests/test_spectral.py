import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualbranch.errors import ContractError, IngestionError
from dualbranch.spectral import (
    FAKE,
    REAL,
    ImageSample,
    SpectrumMap,
    branch_inputs,
    center_quadrants,
    fft2d,
    high_frequency_energy,
    image_spectrum,
    load_png,
    log_magnitude,
    minmax_normalize,
    save_png,
    spectrum_to_branch_input,
    to_grayscale,
)


def direct_dft(g):
    """O(N^2) double-loop DFT, the reference for the fast transform."""
    h, w = g.shape
    y = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            out[u, v] = np.sum(g * np.exp(-2j * np.pi * (u * y / h + v * x / w)))
    return out


def inverse_dft(f):
    h, w = f.shape
    u = np.arange(h)[:, None]
    v = np.arange(w)[None, :]
    out = np.zeros((h, w), dtype=complex)
    for y in range(h):
        for x in range(w):
            out[y, x] = np.sum(f * np.exp(2j * np.pi * (u * y / h + v * x / w)))
    return out / (h * w)


def sample(pixels, label=REAL):
    return ImageSample(np.asarray(pixels, dtype=float), label, "T2I-like", "s0")


# -- grayscale -----------------------------------------------------------------


@pytest.mark.parametrize("rgb,expected", [((1, 1, 1), 1.0), ((1, 0, 0), 0.299), ((0.5, 0.5, 0.5), 0.5)])
def test_grayscale_pixels(rgb, expected):
    img = sample(np.broadcast_to(rgb, (2, 2, 3)))
    assert np.all(to_grayscale(img).data == expected)


def test_image_sample_validation():
    with pytest.raises(ContractError):
        sample(np.full((4, 4, 3), 1.5))
    with pytest.raises(ContractError):
        sample(np.zeros((6, 6, 3)))
    with pytest.raises(ContractError):
        sample(np.zeros((4, 4)))
    with pytest.raises(ContractError):
        ImageSample(np.zeros((4, 4, 3)), 2, "T2I-like", "x")
    with pytest.raises(ContractError):
        ImageSample(np.zeros((4, 4, 3)), FAKE, "GAN-like", "x")


# -- fft -----------------------------------------------------------------------


@pytest.mark.parametrize("size", [(8, 8), (16, 16), (4, 16), (2, 1)])
def test_fft_matches_direct_dft(size):
    g = np.random.default_rng(sum(size)).uniform(-1, 1, size)
    assert np.max(np.abs(fft2d(g) - direct_dft(g))) < 1e-9


def test_fft_constant_and_impulse():
    f = fft2d(np.full((8, 4), 0.75))
    assert f[0, 0] == pytest.approx(0.75 * 32)
    assert np.max(np.abs(f.reshape(-1)[1:])) < 1e-12
    imp = np.zeros((8, 8))
    imp[0, 0] = 1.0
    assert np.allclose(np.abs(fft2d(imp)), 1.0, atol=1e-12)


def test_fft_batched_last_two_axes():
    g = np.random.default_rng(1).uniform(size=(3, 8, 8))
    f = fft2d(g)
    for i in range(3):
        assert np.array_equal(f[i], fft2d(g[i]))


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ContractError):
        fft2d(np.zeros((6, 8)))


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from([(4, 4), (8, 8), (8, 2), (16, 16)]).flatmap(
        lambda s: arrays(np.float64, s, elements=st.floats(-4, 4))
    )
)
def test_fft_properties(g):
    f = fft2d(g)
    h, w = g.shape
    # Parseval
    lhs, rhs = np.sum(np.abs(f) ** 2), h * w * np.sum(g**2)
    assert abs(lhs - rhs) <= 1e-9 * max(rhs, 1e-300) + 1e-18
    # inverse recovers input
    assert np.max(np.abs(inverse_dft(f) - g)) < 1e-9
    # conjugate symmetry of magnitudes
    mag = np.abs(f)
    flipped = mag[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    assert np.allclose(mag, flipped, rtol=0, atol=1e-9)


# -- log magnitude and normalization -----------------------------------------------


def test_log_magnitude_impulse_and_constant():
    imp = np.zeros((8, 8))
    imp[0, 0] = 1.0
    assert np.allclose(log_magnitude(fft2d(imp)).values, np.log(2.0))

    smap = log_magnitude(fft2d(np.ones((8, 8))), center_dc=True)
    assert smap.dc_centered
    assert smap.values[4, 4] == pytest.approx(np.log(65.0))
    rest = smap.values.copy()
    rest[4, 4] = 0
    assert np.max(rest) < 1e-12


def test_centering_is_a_permutation():
    g = np.random.default_rng(2).uniform(size=(8, 16))
    a = log_magnitude(fft2d(g), center_dc=True)
    b = log_magnitude(fft2d(g), center_dc=False)
    assert not b.dc_centered
    assert np.array_equal(np.sort(a.values, axis=None), np.sort(b.values, axis=None))
    assert a.values[4, 8] == b.values[0, 0]
    assert np.array_equal(center_quadrants(b.values), a.values)


def test_log_magnitude_nonnegative_and_monotone():
    spec = np.array([[0.0, 1.0], [3.0, 10.0]]) * np.exp(1j * 0.3)
    vals = log_magnitude(spec, center_dc=False).values
    assert np.all(vals >= 0)
    assert np.all(np.diff(vals.reshape(-1)) > 0)


def test_branch_input_normalization():
    const = spectrum_to_branch_input(SpectrumMap(np.full((4, 4), 2.0), True))
    assert const.shape == (1, 4, 4) and np.all(const.data == 0)
    m = np.zeros((4, 4))
    m[0, 0], m[1, 1] = 5.0, 2.5
    out = spectrum_to_branch_input(SpectrumMap(m, True)).data[0]
    assert out[0, 0] == 1.0 and out[1, 1] == 0.5


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 8), elements=st.floats(0, 1e6)))
def test_normalized_range(values):
    out = minmax_normalize(values)
    assert np.all(out >= 0) and np.all(out <= 1)


def test_batched_branch_inputs_match_single_image_path():
    rng = np.random.default_rng(3)
    pixels = rng.uniform(size=(3, 8, 8, 3))
    batch = branch_inputs(pixels)
    for i in range(3):
        single = spectrum_to_branch_input(image_spectrum(sample(pixels[i]))).data
        assert np.allclose(batch[i], single, atol=1e-15)


def test_high_frequency_energy_orders_smooth_below_checkerboard():
    smooth = np.broadcast_to(np.linspace(0, 1, 16)[None, :, None], (16, 16, 3))
    checker = np.broadcast_to((np.indices((16, 16)).sum(0) % 2)[:, :, None], (16, 16, 3)).astype(float)
    assert high_frequency_energy(smooth) < 0.05 < 0.45 < high_frequency_energy(checker)


# -- PNG ----------------------------------------------------------------------


def test_png_round_trip(tmp_path):
    pixels = np.random.default_rng(4).uniform(size=(8, 8, 3))
    save_png(sample(pixels), tmp_path / "a.png")
    back = load_png(tmp_path / "a.png", label=FAKE, domain="FE-like")
    assert back.id == "a" and back.label == FAKE and back.domain == "FE-like"
    assert np.max(np.abs(back.pixels - pixels)) <= 0.5 / 255 + 1e-12


def test_png_ingestion_errors(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"\x89PNG not really")
    with pytest.raises(IngestionError, match="bad.png"):
        load_png(bad)
    from PIL import Image

    Image.new("RGB", (6, 6)).save(tmp_path / "odd.png")
    with pytest.raises(IngestionError, match="odd.png"):
        load_png(tmp_path / "odd.png")
