"""vrmotion: multiuser redirected-walking simulation, short-term lateral
movement prediction, and synthetic head-rotation generation.

Subpackages/modules:
    core        angle arithmetic, time-series container, seeded random streams
    simulator   APF redirected-walking simulator with reset handling
    nn          small float64 recurrent networks with hand-derived backprop
    lateral     feature windows, LSTM predictor training, squared-error reports
    preprocess  downsampling, quantile transform, windowing, synthetic corpus
    timegan     embedder/recoverer/generator/supervisor/discriminator pipeline
    fftgen      power-spectral-density resynthesis baseline generator
    metrics     histograms, KL divergence, beam coverage
    cli         command-line entry points
"""

__version__ = "0.1.0"

from .core import wrap_angle, unwrap_series, rewrap_series, TimeSeries, stream_rng

__all__ = [
    "wrap_angle",
    "unwrap_series",
    "rewrap_series",
    "TimeSeries",
    "stream_rng",
    "__version__",
]
