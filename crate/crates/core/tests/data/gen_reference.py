"""Regenerates the frozen reference values used by the wavelet and filter tests.

Requires PyWavelets and SciPy. Output is pasted into tests/reference.rs.
"""
import numpy as np
import pywt
from scipy import signal


def fmt(xs):
    return ", ".join(repr(float(v)) for v in xs)


w = pywt.Wavelet("db4")
print("// db4 dec_lo (reversed order relative to the synthesis lowpass)")
print(f"const PYWT_DEC_LO: [f64; 8] = [{fmt(w.dec_lo)}];")

n = np.arange(32)
x = np.sin(0.3 * n) + 0.5 * np.cos(1.7 * n) + n / 50.0
coeffs = pywt.wavedec(x, "db4", mode="symmetric", level=4)
for name, c in zip(["A4", "D4", "D3", "D2", "D1"], coeffs):
    print(f"const SYM_{name}: [f64; {len(c)}] = [{fmt(c)}];")

sos = signal.butter(4, [4.0, 45.0], btype="bandpass", fs=512.0, output="sos")
print(f"const BUTTER_SOS: [[f64; 6]; {len(sos)}] = [")
for row in sos:
    print(f"    [{fmt(row)}],")
print("];")
for f in (10.0, 60.0):
    _, h = signal.sosfreqz(sos, worN=[f], fs=512.0)
    print(f"// |H({f})|^2 = {abs(h[0])**2!r}")

t = np.arange(1024) / 512.0
y = np.sin(2 * np.pi * 10 * t) + 0.3 * np.sin(2 * np.pi * 70 * t) + 0.2 * np.sin(2 * np.pi * 1.5 * t)
f = signal.sosfiltfilt(sos, y)
idx = [0, 1, 100, 511, 900, 1023]
print(f"const FILTFILT_IDX: [usize; {len(idx)}] = {idx};")
print(f"const FILTFILT_VAL: [f64; {len(idx)}] = [{fmt(f[idx])}];")
