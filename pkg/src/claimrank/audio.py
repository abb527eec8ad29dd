"""Audio segments: WAV I/O, resampling, 8-second cutting, spectral gating, MFCC."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from scipy.io import wavfile

from .corpus import SegmentRef
from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

MAX_SEGMENT_SECONDS = 8.0
TARGET_RATE = 16000
LOG_FLOOR = 1e-10


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class NoiseGateConfig:
    n_fft: int = 1024
    hop: int = 256
    n_std_thresh: float = 1.5
    prop_decrease: float = 1.0
    freq_smooth_bins: int = 2
    time_smooth_frames: int = 4
    # Median window (+-bins) applied to the per-frequency threshold; 0 keeps the raw per-bin estimate.
    noise_floor_bins: int = 8

    def __post_init__(self):
        if self.hop < 1 or self.hop > self.n_fft:
            raise ValidationError(f"hop must be in [1, n_fft], got {self.hop}")
        if self.n_std_thresh < 0:
            raise ValidationError("n_std_thresh must be >= 0")
        if not 0.0 <= self.prop_decrease <= 1.0:
            raise ValidationError("prop_decrease must be in [0, 1]")
        if min(self.freq_smooth_bins, self.time_smooth_frames, self.noise_floor_bins) < 0:
            raise ValidationError("smoothing widths must be >= 0")


@dataclass(frozen=True)
class MfccConfig:
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 26
    n_coeffs: int = 13
    preemphasis: float = 0.97

    def __post_init__(self):
        if self.n_coeffs > self.n_mels:
            raise ValidationError(f"n_coeffs {self.n_coeffs} exceeds n_mels {self.n_mels}")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValidationError("preemphasis must be in [0, 1)")


# ---------------------------------------------------------------------------
# I/O


def read_wav(path) -> Waveform:
    """Load 16-bit PCM or 32-bit float WAV; stereo is averaged to mono."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise FormatError(f"{path}: unsupported WAV ({exc})") from None
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Waveform(x, int(rate))


def write_wav(w: Waveform, path) -> None:
    """Write as 16-bit PCM."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), w.sample_rate, pcm)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampling (not band-limited)."""
    if target_rate <= 0:
        raise ValidationError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    pos = np.arange(n_out) * (w.sample_rate / target_rate)
    out = np.interp(pos, np.arange(len(w)), w.samples) if len(w) else np.zeros(n_out)
    return Waveform(out, target_rate)


def cut_segment(w: Waveform, ref: SegmentRef, max_seconds: float = MAX_SEGMENT_SECONDS) -> Waveform:
    """Samples in [start, min(end, start + max_seconds)); keeps the head of long segments."""
    sr = w.sample_rate
    start = ref.start_ms * sr // 1000
    if start >= len(w):
        raise ValidationError(
            f"segment {ref.key}: start {ref.start_ms} ms beyond recording end ({len(w) * 1000 // sr} ms)"
        )
    end = ref.end_ms * sr // 1000
    end = min(end, start + int(round(max_seconds * sr)))
    if end > len(w):
        logger.warning("segment %s ends past the recording; clamped", ref.key)
        end = len(w)
    return Waveform(w.samples[start:end].copy(), sr)


# ---------------------------------------------------------------------------
# STFT


def hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    n_frames = (len(x) - size) // hop + 1
    idx = np.arange(size)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(w, n_fft: int, hop: int) -> np.ndarray:
    """Hann-windowed STFT, shape (frames, n_fft // 2 + 1), no centring or padding."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if len(x) < n_fft:
        raise ValidationError(f"input of {len(x)} samples shorter than n_fft={n_fft}")
    return np.fft.rfft(_frames(x, n_fft, hop) * hann(n_fft), axis=1)


def istft(spec: np.ndarray, n_fft: int, hop: int, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft` (synthesis window = Hann)."""
    win = hann(n_fft)
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * win
    n = (spec.shape[0] - 1) * hop + n_fft
    out = np.zeros(n)
    norm = np.zeros(n)
    for i, fr in enumerate(frames):
        out[i * hop:i * hop + n_fft] += fr
        norm[i * hop:i * hop + n_fft] += win ** 2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    if length is not None:
        out = out[:length] if len(out) >= length else np.pad(out, (0, length - len(out)))
    return out


def _padded_for_gate(x: np.ndarray, n_fft: int, hop: int) -> tuple[np.ndarray, int]:
    # Pad so that every original sample sits under at least one full window overlap.
    left = n_fft
    total = left + len(x) + n_fft
    total += (-(total - n_fft)) % hop
    return np.pad(x, (left, total - left - len(x))), left


def spectral_gate_denoise(w: Waveform, cfg: NoiseGateConfig = NoiseGateConfig()) -> Waveform:
    """Stationary spectral gating using noise statistics from the clip itself.

    Per frequency, the gate opens where the magnitude exceeds
    ``mean + n_std_thresh * std`` over all frames. When ``noise_floor_bins``
    is positive the threshold curve is median-filtered across neighbouring
    frequencies, so a steady narrow-band source does not raise its own
    threshold. The binary mask is smoothed with a separable moving average and
    closed cells are scaled by ``1 - prop_decrease``.
    """
    x = w.samples
    if len(x) < cfg.n_fft:
        raise ValidationError(f"input of {len(x)} samples shorter than n_fft={cfg.n_fft}")
    padded, left = _padded_for_gate(x, cfg.n_fft, cfg.hop)
    spec = stft(padded, cfg.n_fft, cfg.hop)
    mag = np.abs(spec)
    thresh = mag.mean(axis=0) + cfg.n_std_thresh * mag.std(axis=0)
    if cfg.noise_floor_bins > 0:
        thresh = ndimage.median_filter(thresh, size=2 * cfg.noise_floor_bins + 1, mode="nearest")
    mask = (mag > thresh[None, :]).astype(np.float64)
    if cfg.time_smooth_frames > 0:
        mask = ndimage.uniform_filter1d(mask, 2 * cfg.time_smooth_frames + 1, axis=0, mode="constant")
    if cfg.freq_smooth_bins > 0:
        mask = ndimage.uniform_filter1d(mask, 2 * cfg.freq_smooth_bins + 1, axis=1, mode="constant")
    gain = 1.0 - cfg.prop_decrease * (1.0 - mask)
    out = istft(spec * gain, cfg.n_fft, cfg.hop, length=len(padded))[left:left + len(x)]
    return Waveform(np.clip(out, -1.0, 1.0), w.sample_rate)


def stft_roundtrip(w: Waveform, cfg: NoiseGateConfig = NoiseGateConfig()) -> Waveform:
    """What :func:`spectral_gate_denoise` returns with the gate disabled."""
    padded, left = _padded_for_gate(w.samples, cfg.n_fft, cfg.hop)
    spec = stft(padded, cfg.n_fft, cfg.hop)
    out = istft(spec, cfg.n_fft, cfg.hop, length=len(padded))[left:left + len(w)]
    return Waveform(np.clip(out, -1.0, 1.0), w.sample_rate)


def reference_snr_db(output: np.ndarray, clean: np.ndarray) -> float:
    """SNR of ``output`` measured against a known clean reference by projection."""
    output = np.asarray(output, float)
    clean = np.asarray(clean, float)
    alpha = np.dot(output, clean) / np.dot(clean, clean)
    signal = alpha * clean
    noise = output - signal
    return 10.0 * np.log10(np.dot(signal, signal) / np.dot(noise, noise))


# ---------------------------------------------------------------------------
# MFCC


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters over [0, sr/2], shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def mfcc(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """MFCC matrix of shape (frames, n_coeffs)."""
    sr = w.sample_rate
    if sr != TARGET_RATE:
        raise ValidationError(f"mfcc expects {TARGET_RATE} Hz input, got {sr}; resample first")
    win = int(round(cfg.win_ms * sr / 1000.0))
    hop = int(round(cfg.hop_ms * sr / 1000.0))
    x = w.samples
    if len(x) < win:
        raise ValidationError(f"input of {len(x)} samples shorter than window {win}")
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.preemphasis * x[:-1]
    n_fft = _next_pow2(win)
    frames = _frames(y, win, hop) * hann(win)
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2 / n_fft
    energies = power @ mel_filterbank(cfg.n_mels, n_fft, sr).T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    return sfft.dct(logmel, type=2, axis=1, norm="ortho")[:, :cfg.n_coeffs]


def pool_features(m: np.ndarray) -> np.ndarray:
    """Per-coefficient mean followed by population standard deviation."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValidationError("pool_features needs at least one frame")
    return np.concatenate([m.mean(axis=0), m.std(axis=0)])


def segment_features(recording: Waveform, ref: SegmentRef, cfg: MfccConfig = MfccConfig(),
                     denoise: NoiseGateConfig | None = None) -> np.ndarray:
    """Cut (8 s cap), optionally denoise, resample to 16 kHz and pool MFCCs."""
    seg = cut_segment(recording, ref)
    if denoise is not None and len(seg) >= denoise.n_fft:
        seg = spectral_gate_denoise(seg, denoise)
    seg = resample(seg, TARGET_RATE)
    win = int(round(cfg.win_ms * TARGET_RATE / 1000.0))
    if len(seg) < win:
        seg = Waveform(np.pad(seg.samples, (0, win - len(seg))), TARGET_RATE)
    return pool_features(mfcc(seg, cfg))
