# Copyright 2026 The CaSNet-cpp Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

"""Freezes a STOI reference value computed by pystoi.

Usage: make_stoi_fixture.py <casnet binary> <out dir>
Renders a 0 dB single-mic scene with the casnet CLI, then scores the noisy
mixture against the target with pystoi and writes stoi_fixture.json. A
white-noise estimate (numpy seed 50, std 0.1) is scored the same way.
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pystoi
from scipy.io import wavfile


def main():
    binary, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([binary, "--seed", "2024", "simulate", "--mics", "1", "--snr", "0", "--out", tmp], check=True)
        fs, target = wavfile.read(Path(tmp) / "target.wav")
        _, noisy = wavfile.read(Path(tmp) / "mix_0.wav")
    target = target.astype(np.float64)
    noisy = noisy.astype(np.float64)
    wavfile.write(out / "stoi_target.wav", fs, target.astype(np.float32))
    wavfile.write(out / "stoi_noisy.wav", fs, noisy.astype(np.float32))
    white = np.random.default_rng(50).normal(0.0, 0.1, len(target)).astype(np.float32)
    wavfile.write(out / "stoi_white.wav", fs, white)
    fixture = {
        "fs": int(fs),
        "reference": "stoi_target.wav",
        "estimate": "stoi_noisy.wav",
        "stoi": float(pystoi.stoi(target, noisy, fs, extended=False)),
        "stoi_self": float(pystoi.stoi(target, target, fs, extended=False)),
        "white": "stoi_white.wav",
        "stoi_white": float(pystoi.stoi(target, white.astype(np.float64), fs, extended=False)),
        "pystoi_version": getattr(pystoi, "__version__", "unknown"),
    }
    (out / "stoi_fixture.json").write_text(json.dumps(fixture, indent=2) + "\n")
    print(fixture)


if __name__ == "__main__":
    main()
