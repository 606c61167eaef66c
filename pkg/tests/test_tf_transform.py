import wave

import numpy as np
import pytest
from scipy.io import wavfile

from lsdd.tf_transform import (
    InsufficientSamplesError,
    MultichannelAudio,
    bin_frequency,
    frame_time,
    hann,
    read_wav,
    stft,
    write_wav,
)

FS = 48000.0


def parseval_rel_error(frame, window):
    seg = frame * window
    spec = np.fft.rfft(seg)
    n = len(seg)
    weights = np.full(spec.size, 2.0)
    weights[0] = weights[-1] = 1.0  # DC and Nyquist appear once in the two-sided sum
    freq_energy = np.sum(weights * np.abs(spec) ** 2) / n
    time_energy = sum(float(s) ** 2 for s in seg)
    return abs(freq_energy - time_energy) / time_energy


def test_zero_input():
    tf = stft(MultichannelAudio(FS, np.zeros((3, 4096))))
    assert tf.data.shape == (3, 7, 513)
    assert not np.any(tf.data)


def test_bin_aligned_sinusoid_peaks_at_bin():
    k = 37
    t = np.arange(8192) / FS
    x = np.sin(2 * np.pi * k * FS / 1024 * t)
    tf = stft(MultichannelAudio(FS, x[None, :]))
    assert np.all(np.argmax(np.abs(tf.data[0]), axis=1) == k)


def test_parseval_per_frame(rng):
    x = rng.standard_normal((2, 1024 * 4))
    tf = stft(MultichannelAudio(FS, x))
    win = hann(1024)
    for m in range(2):
        for k in range(tf.num_frames):
            frame = x[m, k * 512 : k * 512 + 1024]
            w = np.full(tf.num_bins, 2.0)
            w[0] = w[-1] = 1.0
            freq_energy = np.sum(w * np.abs(tf.data[m, k]) ** 2) / 1024
            time_energy = np.sum((frame * win) ** 2)
            assert abs(freq_energy - time_energy) / time_energy < 1e-6
            assert parseval_rel_error(frame, win) < 1e-6


def test_linearity(rng):
    a = rng.standard_normal((2, 5000))
    b = rng.standard_normal((2, 5000))
    sa, sb, sab = (stft(MultichannelAudio(FS, v)).data for v in (a, b, a + b))
    np.testing.assert_allclose(sab, sa + sb, rtol=1e-9, atol=1e-9 * np.abs(sab).max())


def test_hop_shift_moves_frames_by_one(rng):
    x = rng.standard_normal((1, 512 * 20))
    shifted = np.concatenate([np.zeros((1, 512)), x[:, :-512]], axis=1)
    a = stft(MultichannelAudio(FS, x)).data
    b = stft(MultichannelAudio(FS, shifted)).data
    np.testing.assert_allclose(b[:, 1:], a[:, :-1], rtol=1e-9, atol=1e-12)


def test_frame_geometry():
    tf = stft(MultichannelAudio(FS, np.zeros((1, 1024 + 512 * 10 + 100))))
    assert tf.num_frames == 11  # trailing partial frame dropped
    assert tf.num_bins == 513
    assert bin_frequency(tf, 0) == 0.0
    assert bin_frequency(tf, 512) == 24000.0
    assert frame_time(tf, 10) == pytest.approx(tf.start_time + 0.1066667, abs=1e-6)
    np.testing.assert_allclose(np.diff(tf.frame_times), 512 / FS)
    with pytest.raises(IndexError):
        bin_frequency(tf, 513)
    with pytest.raises(IndexError):
        frame_time(tf, 11)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError, match="insufficient samples"):
        stft(MultichannelAudio(FS, np.zeros((2, 1000))))


@pytest.mark.parametrize("window, hop", [(1023, 512), (1024, 0), (1024, 2048)])
def test_bad_parameters(window, hop):
    with pytest.raises(ValueError):
        stft(MultichannelAudio(FS, np.zeros((1, 4096))), window, hop)


def test_periodic_hann():
    w = hann(8)
    assert w[0] == 0.0 and w[4] == pytest.approx(1.0)
    assert hann(8, periodic=False)[-1] == pytest.approx(0.0)


def test_wav_float_roundtrip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, (6, 2000))
    write_wav(tmp_path / "a.wav", MultichannelAudio(FS, x))
    y = read_wav(tmp_path / "a.wav")
    assert y.sample_rate == FS and y.samples.shape == (6, 2000)
    np.testing.assert_allclose(y.samples, x.astype(np.float32), atol=0)


@pytest.mark.parametrize("dtype, scale", [(np.int16, 32768.0), (np.int32, 2147483648.0)])
def test_wav_int_pcm(tmp_path, dtype, scale):
    x = np.array([[0, 1000, -1000, 12345], [5, -5, 77, -77]], dtype=dtype)
    wavfile.write(tmp_path / "i.wav", 16000, x.T)
    y = read_wav(tmp_path / "i.wav")
    np.testing.assert_allclose(y.samples, x / scale)


def test_wav_24bit(tmp_path):
    values = np.array([[0, 4096, -4096], [8388607, -8388608, 1]])  # (channels, samples)
    frames = bytearray()
    for n in range(values.shape[1]):
        for m in range(values.shape[0]):
            frames += int(values[m, n]).to_bytes(3, "little", signed=True)
    with wave.open(str(tmp_path / "p24.wav"), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(3)
        w.setframerate(48000)
        w.writeframes(bytes(frames))
    y = read_wav(tmp_path / "p24.wav")
    np.testing.assert_allclose(y.samples, values / 8388608.0)
