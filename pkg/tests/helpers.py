"""Independent oracles shared by unit and acceptance tests.

The DFT here is the direct definition (matrix of complex exponentials, no
windowing, no FFT library reuse of the implementation path) so band powers
can be checked against an independently computed spectrum.
"""

from __future__ import annotations

import numpy as np

BAND_EDGES = {
    "theta": (4.0, 8.0),
    "alpha": (8.0, 12.0),
    "betaL": (12.0, 16.0),
    "betaH": (16.0, 25.0),
    "gamma": (25.0, 45.0),
}


def dft_power_spectrum(samples, rate_hz: int = 128):
    """One-sided mean-square power spectrum by the plain DFT definition.

    A sinusoid of amplitude A on an exact bin carries total power A**2 / 2.
    Returns (freqs, power) arrays.
    """
    x = np.asarray(samples, dtype=np.float64)
    n_samples = len(x)
    k = np.arange(n_samples // 2 + 1)
    n = np.arange(n_samples)
    basis = np.exp(-2j * np.pi * np.outer(k, n) / n_samples)
    spectrum = basis @ x
    power = (spectrum.real ** 2 + spectrum.imag ** 2) * (2.0 / (n_samples * n_samples))
    power[0] *= 0.5
    if n_samples % 2 == 0:
        power[-1] *= 0.5
    freqs = k * rate_hz / n_samples
    return freqs, power


def dft_band_powers(samples, rate_hz: int = 128) -> dict[str, float]:
    freqs, power = dft_power_spectrum(samples, rate_hz)
    out = {}
    for name, (lo, hi) in BAND_EDGES.items():
        mask = (freqs >= lo) & (freqs < hi)
        out[name] = float(power[mask].sum())
    return out


def dft_total_power(samples, rate_hz: int = 128, lo: float = 4.0, hi: float = 45.0) -> float:
    freqs, power = dft_power_spectrum(samples, rate_hz)
    return float(power[(freqs >= lo) & (freqs < hi)].sum())


def ppm_pixels(data: bytes):
    """Minimal independent P6 reader for test assertions."""
    assert data.startswith(b"P6")
    header, rest = data.split(b"\n", 1)
    dims, rest = rest.split(b"\n", 1)
    maxval, raw = rest.split(b"\n", 1)
    width, height = (int(v) for v in dims.split())
    assert int(maxval) == 255
    return np.frombuffer(raw[: width * height * 3], dtype=np.uint8).reshape(height, width, 3)


def region_variance(pixels) -> float:
    """Pixel variance of a region: per-channel variance, averaged."""
    flat = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    return float(flat.var(axis=0).mean())


def record_session(manager, session_id: str, duration_ms: int = 6000,
                   segment_ms: int = 2000, seed: int = 0, image_period_ms: int = 1000):
    """Drive a small but full-featured scenario through a manager; returns its dir."""
    from fprig.client import LocalIngestClient
    from fprig.model import SessionConfig
    from fprig.sim import EegTone, GsrEvent, ImageSpec, Scenario, SpeechLine, run_scenario

    image_times = range(0, duration_ms, image_period_ms)
    scenario = Scenario(
        duration_ms=duration_ms,
        eeg_tones=(EegTone(freq_hz=10.0, amplitude=500.0),),
        noise_amplitude=3.0,
        gsr_events=(GsrEvent(t_ms=min(1000, max(duration_ms - 1, 0)), delta=1.5),),
        speech_script=(SpeechLine(0, "wearer", "start ziggy feeling fine end ziggy"),)
        if duration_ms >= 3000 else (),
        image_script=tuple(
            ImageSpec(t_ms=t, scene=f"scene{t}", face_boxes=((40, 40, 50, 50),),
                      labels=("Person",), texts=("EXIT",))
            for t in list(image_times)[:2]),
        rng_seed=seed,
    )
    config = SessionConfig(session_id=session_id, segment_duration_ms=segment_ms,
                           image_period_ms=image_period_ms, rng_seed=seed)
    summary = run_scenario(scenario, LocalIngestClient(manager), config)
    return manager.data_dir / session_id, summary
