"""TimeGAN-style generative pipeline for head-rotation windows.

Five GRU-based subnetworks share a latent space: an embedder maps feature
windows into the latent space, a recoverer maps them back, a generator maps
uniform noise into latents, a supervisor predicts the next latent step, and
a discriminator classifies latent sequences as real or synthetic.

Training runs in three phases: (1) embedder/recoverer reconstruction,
(2) supervisor next-step prediction on embedded real data, (3) joint
alternating training (one generator step, one discriminator step per batch)
where the generator loss combines the adversarial cross-entropy, the
supervised next-step term, and a moment-matching term.  Checkpoints are
snapshotted once every 10 joint epochs because quality is not monotone in
the epoch count; selection among checkpoints is an explicit, separate step.

Generation touches only the trained model and a noise seed; source windows
are never read at generation time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .core import stream_rng
from .metrics import histogram_pdf, kl_divergence, align_histograms
from .preprocess import postprocess

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimeGanConfig:
    features: int = 3
    window_len: int = 25
    latent_dim: int = 12
    hidden: int = 12
    layers: int = 1
    batch_size: int = 128
    lr: float = 1e-3
    disc_lr: float = 1e-3
    recon_epochs: int = 40
    supervised_epochs: int = 20
    # the yaw distribution spends a long time on a plateau where one
    # distribution tail stays uncovered before snapping into place, so the
    # schedule runs well past the snap and checkpoint selection does the rest
    joint_epochs: int = 400
    checkpoint_every: int = 10
    recon_weight: float = 10.0
    supervised_weight: float = 1.0
    moment_weight: float = 30.0


@dataclass
class TimeGanModel:
    config: TimeGanConfig
    embedder: nn.RecurrentNetwork
    recoverer: nn.RecurrentNetwork
    generator: nn.RecurrentNetwork
    supervisor: nn.RecurrentNetwork
    discriminator: nn.RecurrentNetwork
    seed: int = 0
    epoch: int = 0
    reconstruction_mse: float = float("nan")

    def nets(self):
        return {
            "embedder": self.embedder, "recoverer": self.recoverer,
            "generator": self.generator, "supervisor": self.supervisor,
            "discriminator": self.discriminator,
        }

    def snapshot(self, epoch):
        """Deep copy for checkpointing."""
        nets = {k: nn.RecurrentNetwork.from_dict(v.to_dict())
                for k, v in self.nets().items()}
        return TimeGanModel(config=self.config, seed=self.seed, epoch=epoch,
                            reconstruction_mse=self.reconstruction_mse, **nets)

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "config": asdict(self.config),
            "seed": self.seed,
            "epoch": self.epoch,
            "reconstruction_mse": self.reconstruction_mse,
            "nets": {k: v.to_dict() for k, v in self.nets().items()},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported TimeGAN model format version")
        nets = {k: nn.RecurrentNetwork.from_dict(v) for k, v in d["nets"].items()}
        return cls(config=TimeGanConfig(**d["config"]), seed=d["seed"],
                   epoch=d["epoch"], reconstruction_mse=d["reconstruction_mse"],
                   **nets)


def _build_model(config, seed):
    rng = stream_rng(seed, "timegan-init")
    F, L, H, nl = config.features, config.latent_dim, config.hidden, config.layers
    build = nn.RecurrentNetwork.build
    return TimeGanModel(
        config=config, seed=seed,
        embedder=build("gru", F, H, nl, L, rng, head_activation="sigmoid"),
        recoverer=build("gru", L, H, nl, F, rng, head_activation="linear"),
        generator=build("gru", L, H, nl, L, rng, head_activation="sigmoid"),
        supervisor=build("gru", L, H, 1, L, rng, head_activation="sigmoid"),
        discriminator=build("gru", L, H, nl, 1, rng, head_activation="linear"),
    )


def _moment_loss(x_hat, x_real):
    """Per-feature distribution-matching term: L1 gap of batch mean and std
    plus the mean L1 gap of order statistics.  The order-statistic part
    (equivalently, L-moment matching) anchors the whole marginal shape,
    which the first two moments alone leave unconstrained.  Returns
    (loss, d loss / d x_hat)."""
    ax = (0, 1)
    n = x_hat.shape[0] * x_hat.shape[1]
    nf = x_hat.shape[2]
    mu_h = x_hat.mean(axis=ax)
    mu_r = x_real.mean(axis=ax)
    sd_h = x_hat.std(axis=ax)
    sd_r = x_real.std(axis=ax)
    loss = float(np.mean(np.abs(mu_h - mu_r)) + np.mean(np.abs(sd_h - sd_r)))
    safe_sd = np.maximum(sd_h, 1e-12)
    dx = (np.sign(mu_h - mu_r)[None, None, :]
          + np.sign(sd_h - sd_r)[None, None, :] * (x_hat - mu_h) / safe_sd) / (n * nf)

    flat_h = x_hat.reshape(n, nf)
    flat_r = x_real.reshape(-1, nf)
    if flat_r.shape[0] == n:
        order = np.argsort(flat_h, axis=0, kind="stable")
        sorted_h = np.take_along_axis(flat_h, order, axis=0)
        sorted_r = np.sort(flat_r, axis=0)
        diff = sorted_h - sorted_r
        # tail ranks get extra pull: an uncovered distribution tail is the
        # dominant histogram-KL failure mode, but tail ranks are few, so at
        # uniform weight their gradient drowns in the bulk's
        w = 1.0 + sorted_r * sorted_r
        w = w / w.mean(axis=0)
        loss += float(np.mean(w * np.abs(diff)))
        grad = np.empty_like(flat_h)
        np.put_along_axis(grad, order, w * np.sign(diff) / (n * nf), axis=0)
        dx = dx + grad.reshape(x_hat.shape)
    return loss, dx


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainingHistory:
    recon: list = field(default_factory=list)
    supervised: list = field(default_factory=list)
    joint_generator: list = field(default_factory=list)
    joint_discriminator: list = field(default_factory=list)
    discriminator_accuracy: list = field(default_factory=list)


def _check(loss, what):
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{what} loss became non-finite")
    return loss


def timegan_train(windows, config=None, seed=0, min_windows=1000, verbose=False):
    """Train on transformed rotation windows (M, window_len, features).

    Returns (model, checkpoints, history); checkpoints are deep model
    snapshots taken every config.checkpoint_every joint epochs.
    """
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3:
        raise ValueError("windows must be (num, window_len, features)")
    if windows.shape[0] < min_windows:
        raise ValueError(
            f"need at least {min_windows} windows, got {windows.shape[0]}")
    if config is None:
        config = TimeGanConfig(features=windows.shape[2],
                               window_len=windows.shape[1])
    if windows.shape[1:] != (config.window_len, config.features):
        raise ValueError("window shape does not match the configuration")

    model = _build_model(config, seed)
    E, R, G, S, D = (model.embedder, model.recoverer, model.generator,
                     model.supervisor, model.discriminator)
    opt_er = nn.Adam(E.parameters() + R.parameters(), lr=config.lr)
    opt_s = nn.Adam(S.parameters(), lr=config.lr)
    opt_gs = nn.Adam(G.parameters() + S.parameters(), lr=config.lr)
    opt_d = nn.Adam(D.parameters(), lr=config.disc_lr)
    batch_rng = stream_rng(seed, "timegan-batches")
    noise_rng = stream_rng(seed, "timegan-noise")
    history = TrainingHistory()
    checkpoints = []

    n = windows.shape[0]
    bs = min(config.batch_size, n)

    def batches():
        order = batch_rng.permutation(n)
        for lo in range(0, n - bs + 1, bs):
            yield windows[order[lo:lo + bs]]

    def noise(b):
        return noise_rng.uniform(0.0, 1.0,
                                 size=(b, config.window_len, config.latent_dim))

    def zero(*nets_):
        for net in nets_:
            net.zero_grad()

    # phase 1: embedder/recoverer reconstruction
    for epoch in range(config.recon_epochs):
        losses = []
        for x in batches():
            zero(E, R)
            h = E.forward(x)
            x_tilde = R.forward(h)
            loss, dxt = nn.mse_loss(x_tilde, x)
            _check(loss, "reconstruction")
            dh = R.backward(config.recon_weight * dxt)
            E.backward(dh)
            opt_er.step(E.gradients() + R.gradients())
            losses.append(loss)
        history.recon.append(float(np.mean(losses)))
        if verbose:
            print(f"[recon {epoch}] mse={history.recon[-1]:.6f}")
    model.reconstruction_mse = history.recon[-1] if history.recon else float("nan")

    # phase 2: supervisor next-step prediction on embedded real data
    for epoch in range(config.supervised_epochs):
        losses = []
        for x in batches():
            zero(S)
            h = E.forward(x)
            s_out = S.forward(h)
            loss, dsp = nn.mse_loss(s_out[:, :-1], h[:, 1:])
            _check(loss, "supervised")
            ds = np.zeros_like(s_out)
            ds[:, :-1] = dsp
            S.backward(ds)
            opt_s.step(S.gradients())
            losses.append(loss)
        history.supervised.append(float(np.mean(losses)))
        if verbose:
            print(f"[supervised {epoch}] mse={history.supervised[-1]:.6f}")

    # phase 3: joint alternating training
    collapse_streak = 0
    for epoch in range(config.joint_epochs):
        g_losses, d_losses, d_accs = [], [], []
        for x in batches():
            b = x.shape[0]

            # --- generator/supervisor step ---
            zero(G, S)
            # supervised term on real embeddings
            h = E.forward(x)
            s_out = S.forward(h)
            l_sup, dsp = nn.mse_loss(s_out[:, :-1], h[:, 1:])
            _check(l_sup, "joint supervised")
            ds = np.zeros_like(s_out)
            ds[:, :-1] = config.supervised_weight * dsp
            S.backward(ds)
            # adversarial + moment terms through the synthetic path
            e_hat = G.forward(noise(b))
            h_hat = S.forward(e_hat)
            x_hat = R.forward(h_hat)
            logits_fake = D.forward(h_hat)
            l_adv, dlog = nn.bce_loss(logits_fake, np.ones_like(logits_fake))
            _check(l_adv, "adversarial")
            dh_hat = D.backward(dlog)  # D gradients discarded below
            l_mom, dx_hat = _moment_loss(x_hat, x)
            _check(l_mom, "moment")
            dh_hat = dh_hat + R.backward(config.moment_weight * dx_hat)
            de_hat = S.backward(dh_hat)
            G.backward(de_hat)
            zero(D, R)  # synthetic-path gradients never train D or R here
            opt_gs.step(G.gradients() + S.gradients())
            g_losses.append(l_adv + config.supervised_weight * l_sup
                            + config.moment_weight * l_mom)

            # --- embedder/recoverer refresh ---
            zero(E, R)
            h = E.forward(x)
            x_tilde = R.forward(h)
            l_rec, dxt = nn.mse_loss(x_tilde, x)
            _check(l_rec, "joint reconstruction")
            E.backward(R.backward(config.recon_weight * dxt))
            opt_er.step(E.gradients() + R.gradients())

            # --- discriminator step ---
            zero(D)
            h_real = E.forward(x)
            logits_real = D.forward(h_real)
            l_real, dlr = nn.bce_loss(logits_real, np.ones_like(logits_real))
            D.backward(dlr)
            e2 = G.forward(noise(b))
            h2 = S.forward(e2)
            logits_fake = D.forward(h2)
            l_fake, dlf = nn.bce_loss(logits_fake, np.zeros_like(logits_fake))
            D.backward(dlf)
            _check(l_real + l_fake, "discriminator")
            zero(G, S)
            opt_d.step(D.gradients())
            d_losses.append(l_real + l_fake)
            acc = 0.5 * (float(np.mean(logits_real > 0))
                         + float(np.mean(logits_fake <= 0)))
            d_accs.append(acc)

        history.joint_generator.append(float(np.mean(g_losses)))
        history.joint_discriminator.append(float(np.mean(d_losses)))
        history.discriminator_accuracy.append(float(np.mean(d_accs)))
        if verbose:
            print(f"[joint {epoch}] g={history.joint_generator[-1]:.4f} "
                  f"d={history.joint_discriminator[-1]:.4f} "
                  f"acc={history.discriminator_accuracy[-1]:.3f}")

        collapse_streak = collapse_streak + 1 if history.discriminator_accuracy[-1] > 0.99 else 0
        if collapse_streak == 20:
            warnings.warn("discriminator accuracy > 0.99 for 20 consecutive "
                          "epochs; possible collapse")

        model.epoch = epoch + 1
        if (epoch + 1) % config.checkpoint_every == 0:
            checkpoints.append(model.snapshot(epoch + 1))

    if not checkpoints:
        checkpoints.append(model.snapshot(model.epoch))
    return model, checkpoints, history


def timegan_generate(model, n, seed):
    """Generate n transformed-space windows from noise.

    Deterministic given (model, seed); never touches the source corpus."""
    cfg = model.config
    rng = stream_rng(seed, "timegan-generate")
    out = np.empty((n, cfg.window_len, cfg.features))
    lo = 0
    while lo < n:
        b = min(512, n - lo)
        z = rng.uniform(0.0, 1.0, size=(b, cfg.window_len, cfg.latent_dim))
        e_hat = model.generator.forward(z)
        h_hat = model.supervisor.forward(e_hat)
        out[lo:lo + b] = model.recoverer.forward(h_hat)
        lo += b
    return out


def discriminator_accuracy(model, real_windows, seed=0):
    """Held-out discriminator accuracy on real vs freshly generated
    latent sequences (0.5 = indistinguishable)."""
    real_windows = np.asarray(real_windows, dtype=float)
    z = stream_rng(seed, "disc-eval").uniform(
        0.0, 1.0, size=(real_windows.shape[0], model.config.window_len,
                        model.config.latent_dim))
    h_fake = model.supervisor.forward(model.generator.forward(z))
    h_real = model.embedder.forward(real_windows)
    lr = model.discriminator.forward(h_real)
    lf = model.discriminator.forward(h_fake)
    return 0.5 * (float(np.mean(lr > 0)) + float(np.mean(lf <= 0)))


def select_checkpoint(checkpoints, transformer, reference_yaw_deg,
                      n_eval=2000, seed=0, bucket_width=10.0,
                      fixed_epoch=None):
    """Pick the generation checkpoint.

    Default: the checkpoint whose generated yaw distribution minimizes
    KL(reference || generated) on 10-degree buckets.  fixed_epoch reproduces
    the alternative of simply taking a prescribed epoch's checkpoint.
    Returns (model, per-checkpoint KL dict).
    """
    if fixed_epoch is not None:
        for ck in checkpoints:
            if ck.epoch == fixed_epoch:
                return ck, {}
        raise ValueError(f"no checkpoint at epoch {fixed_epoch}")
    ref_hist = histogram_pdf(reference_yaw_deg, bucket_width)
    kls = {}
    best, best_kl = None, np.inf
    for ck in checkpoints:
        gen = timegan_generate(ck, n_eval, seed)
        deg = postprocess(gen, transformer)
        gh = histogram_pdf(deg[..., 0].ravel(), bucket_width)
        p, q = align_histograms(ref_hist, gh)
        kl = kl_divergence(p, q)
        kls[ck.epoch] = kl
        if kl < best_kl:
            best, best_kl = ck, kl
    return best, kls
