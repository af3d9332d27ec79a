"""Head-rotation generation walkthrough.

Builds the seeded synthetic rotation corpus (tri-modal yaw around -90, 0
and +90 degrees), preprocesses it (250 -> 10 Hz, quantile transform,
25-sample windows), trains a small TimeGAN, and compares the generated yaw
distribution against the spectral-resynthesis baseline using 10-degree
bucket KL divergence.

Note: this demo trains at a reduced scale to finish in a couple of
minutes; the distribution match improves with the longer schedules in the
default configuration.
"""

import numpy as np

from vrmotion import fftgen, preprocess, timegan
from vrmotion.core import TimeSeries, wrap_angle
from vrmotion.metrics import align_histograms, histogram_pdf, kl_divergence

# --- corpus and preprocessing ------------------------------------------------

corpus = preprocess.make_rotation_corpus(num_series=6, duration_s=30.0,
                                         rate=250.0, seed=0)
windows, transformer, deg_windows = preprocess.preprocess_series(
    corpus, to_rate=10.0)
print(f"corpus: {len(corpus)} series @ 250 Hz -> "
      f"{windows.shape[0]} windows of {windows.shape[1]} x {windows.shape[2]} "
      f"after downsampling to 10 Hz")

reference_yaw = deg_windows[..., 0].ravel()
hist_ref = histogram_pdf(wrap_angle(reference_yaw), 10.0)
peaks = hist_ref.centers[np.argsort(hist_ref.masses)[-3:]]
print(f"top yaw buckets in the corpus: {sorted(peaks.tolist())} "
      "(the three gaze modes)")

# --- TimeGAN -----------------------------------------------------------------

cfg = timegan.TimeGanConfig(recon_epochs=20, supervised_epochs=10,
                            joint_epochs=60, checkpoint_every=10,
                            moment_weight=30.0)
model, checkpoints, history = timegan.timegan_train(windows, config=cfg, seed=0)
print(f"\nreconstruction MSE: {history.recon[0]:.4f} -> {history.recon[-1]:.4f}")

selected, kls = timegan.select_checkpoint(checkpoints, transformer,
                                          reference_yaw, seed=0)
print("per-checkpoint yaw KL (nats):",
      {e: round(k, 3) for e, k in sorted(kls.items())})
print(f"selected checkpoint: epoch {selected.epoch}")

generated = timegan.timegan_generate(selected, 2000, seed=1)
gen_deg = preprocess.postprocess(generated, transformer)

# --- FFT baseline -------------------------------------------------------------

down = [preprocess.lowpass_downsample(
    TimeSeries(rate=s.rate, values={
        "yaw": preprocess.unwrap_series(wrap_angle(s.values["yaw"])),
        "pitch": s.values["pitch"], "roll": s.values["roll"]}), 10.0)
    for s in corpus]
psd = fftgen.fft_baseline_fit(down)
fft_series = fftgen.fft_baseline_generate(psd, length=30000, seed=1)

# --- comparison ---------------------------------------------------------------


def yaw_kl(samples):
    h = histogram_pdf(wrap_angle(np.asarray(samples).ravel()), 10.0)
    p, q = align_histograms(hist_ref, h)
    return kl_divergence(p, q)


kl_gan = yaw_kl(gen_deg[..., 0])
kl_fft = yaw_kl(fft_series.values["yaw"])
print(f"\nyaw KL(target || TimeGAN): {kl_gan:.4f} nats")
print(f"yaw KL(target || FFT):     {kl_fft:.4f} nats")
print("the quantile transform carries the tri-modal marginal; the FFT "
      "baseline matches the spectrum but scrambles the value distribution")
