"""
Early and late reflections
==========================

Build one scene by hand: a speech-like signal, a synthetic binaural room
response for the talker, one noise source, and the split into a target
(direct sound plus early reflections) and an interferer (late
reverberation plus reverberant noise).
"""

# %%
import numpy as np

from sceneforge import dsp
from sceneforge.renderer import render_arrays
from sceneforge.synthetic import noise_signal, speech_like, synthetic_brir

rate = 16000
rng = np.random.default_rng(0)
speech = speech_like(2.0, rate, rng)
noise = noise_signal(2.0, rate, rng, "pink")
h_speech = synthetic_brir(rate, 0.0, rng, length_s=0.5, rt60=0.7)
h_noise = synthetic_brir(rate, 60.0, rng, length_s=0.5, rt60=0.7)

# %%
# Splitting at 50 ms keeps 800 taps in the early part.
split = dsp.split_ir(h_speech, 50)
print("boundary index:", split.boundary_index)
print("early energy share: %.3f" % (dsp.energy(split.early.left) / dsp.energy(h_speech.left)))

# %%
# Without SNR scaling or normalization, target + interferer is exactly the
# downmixed reverberant scene.
scene = render_arrays(speech, [noise], h_speech, [h_noise], snr_db=None, headroom_db=None)
full = 0.5 * sum(
    np.convolve(speech, ear)[: speech.size] + np.convolve(noise, n_ear)[: speech.size]
    for ear, n_ear in zip(h_speech.channels(), h_noise.channels())
)
print("max |x - downmix(s*h + n*h_n)|: %.2e" % np.max(np.abs(scene.mixture.data - full)))

# %%
# With a requested SNR the whole interferer (late speech tail included) is
# scaled, then all three signals share one peak gain.
for snr in (-5, 0, 5, 10):
    scene = render_arrays(speech, [noise], h_speech, [h_noise], snr_db=snr)
    peak = max(np.abs(b.data).max() for b in (scene.mixture, scene.target, scene.interferer))
    print(f"requested {snr:+3d} dB  realized {scene.realized_snr_db:+.6f} dB  peak {20 * np.log10(peak):.2f} dBFS")

# %%
# Optional figure.
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    t = np.arange(len(h_speech)) / rate * 1000
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, split.early.left, label="early")
    ax.plot(t, split.late.left, label="late", alpha=0.7)
    ax.axvline(50, color="k", linestyle="--")
    ax.set_xlabel("time (ms)")
    ax.legend()
    fig.savefig("brir_split.svg")
