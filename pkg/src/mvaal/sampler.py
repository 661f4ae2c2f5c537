"""Adversarial VAE sampler: single encoder, dual decoders, WGAN-GP critic.

The sampler is trained on labeled and unlabeled pools jointly; the critic
learns to tell the pools apart in latent space and its lowest-scoring
unlabeled samples are sent for annotation.
"""

from __future__ import annotations

import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tensor


class SamplerConfigError(ValueError):
    pass


@dataclass
class SamplerConfig:
    mode: str = "mvaal"  # mvaal | vaal
    latent_dim: int = 16
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    beta_kl: float = 1.0
    lambda_gp: float = 1.0
    lr_vae: float = 1e-4
    lr_disc: float = 1e-4
    epochs: int = 10
    batch_size: int = 16
    image_size: int = 32
    base_width: int = 8
    optimizer: str = "adam"

    def __post_init__(self):
        if self.mode not in ("mvaal", "vaal"):
            raise SamplerConfigError(f"unknown sampler mode: {self.mode}")
        if self.mode == "vaal" and self.gamma3 != 0.0:
            raise SamplerConfigError("vaal mode requires gamma3 = 0")
        for name in ("gamma1", "gamma2", "gamma3", "beta_kl", "lambda_gp"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise SamplerConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.image_size % 16 != 0:
            raise SamplerConfigError("image_size must be divisible by 16")


@dataclass
class LatentBatch:
    mu: Tensor       # [B, latent_dim]
    logvar: Tensor   # [B, latent_dim]
    z: Tensor        # [B, latent_dim]
    noise: np.ndarray


@dataclass
class EpochLosses:
    epoch: int
    adv: float
    recon_m1: float
    recon_m2: float
    kl: float
    disc: float
    gp: float


def _component_seed(seed, name):
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])


def _encoder_arch(cfg: SamplerConfig):
    w = cfg.base_width
    return [
        nn.conv2d("conv1", 1, w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.conv2d("conv2", w, 2 * w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.conv2d("conv3", 2 * w, 4 * w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.conv2d("conv4", 4 * w, 4 * w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.flatten(),
    ]


def _decoder_arch(cfg: SamplerConfig, name_unused=None):
    w = cfg.base_width
    s = cfg.image_size // 16
    return [
        nn.linear("fc", cfg.latent_dim, 4 * w * s * s),
        nn.reshape_to((4 * w, s, s)),
        nn.tconv2d("up1", 4 * w, 4 * w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.tconv2d("up2", 4 * w, 2 * w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.tconv2d("up3", 2 * w, w, 4, stride=2, padding=1), nn.leaky_relu(0.2),
        nn.tconv2d("up4", w, 1, 4, stride=2, padding=1, activation="sigmoid"),
        nn.sigmoid(),
    ]


def _disc_arch(cfg: SamplerConfig):
    return [
        nn.linear("fc1", cfg.latent_dim, 64),
        nn.batch_norm("bn1", 64),
        nn.leaky_relu(0.2),
        nn.linear("fc2", 64, 64),
        nn.batch_norm("bn2", 64),
        nn.leaky_relu(0.2),
        nn.linear("fc3", 64, 1, activation="linear"),
    ]


class SamplerState:
    """Owns the sampler networks, their parameters, optimizers and RNG."""

    def __init__(self, config: SamplerConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        cfg = config
        w = cfg.base_width
        feat = 4 * w * (cfg.image_size // 16) ** 2

        self.encoder = nn.Network("encoder", _encoder_arch(cfg))
        self.mu_head = nn.Network("mu_head", [nn.linear("fc", feat, cfg.latent_dim, activation="linear")])
        self.logvar_head = nn.Network("logvar_head", [nn.linear("fc", feat, cfg.latent_dim, activation="linear")])
        self.decoder_m1 = nn.Network("decoder_m1", _decoder_arch(cfg))
        self.discriminator = nn.Network("discriminator", _disc_arch(cfg))

        def init(net, name):
            return net.init(np.random.default_rng(_component_seed(seed, name)).integers(2 ** 31))

        self.encoder_params = init(self.encoder, "encoder")
        self.mu_params = init(self.mu_head, "mu_head")
        self.logvar_params = init(self.logvar_head, "logvar_head")
        self.decoder_m1_params = init(self.decoder_m1, "decoder_m1")
        self.disc_params = init(self.discriminator, "discriminator")

        if cfg.mode == "mvaal":
            self.decoder_m2 = nn.Network("decoder_m2", _decoder_arch(cfg))
            self.decoder_m2_params = init(self.decoder_m2, "decoder_m2")
        else:
            self.decoder_m2 = None
            self.decoder_m2_params = None

        groups = [self.encoder_params, self.mu_params, self.logvar_params, self.decoder_m1_params]
        if self.decoder_m2_params is not None:
            groups.append(self.decoder_m2_params)
        self.vae_params = groups[0].merged(*groups[1:])
        self.opt_vae = nn.make_optimizer(cfg.optimizer, cfg.lr_vae)
        self.opt_disc = nn.make_optimizer(cfg.optimizer, cfg.lr_disc)
        self.rng = np.random.default_rng(_component_seed(seed, "train_stream"))

    # -- forward passes -------------------------------------------------------

    def disc_forward(self, params: nn.ParamSet, z: Tensor) -> Tensor:
        out = self.discriminator.forward(params, z)
        return T.reshape(out, (z.shape[0],))

    def disc_params_detached(self) -> nn.ParamSet:
        ps = nn.ParamSet(mode=self.disc_params.mode)
        for k, v in self.disc_params.params.items():
            ps.params[k] = v.detach()
        ps.buffers = self.disc_params.buffers
        return ps


@contextmanager
def _mode(params: nn.ParamSet, mode: str):
    prev = params.mode
    params.mode = mode
    try:
        yield
    finally:
        params.mode = prev


def encode(state: SamplerState, x_m1, sample_noise: bool) -> LatentBatch:
    """Map m1 images to (mu, logvar, z); sample_noise=False gives z = mu."""
    x = x_m1 if isinstance(x_m1, Tensor) else Tensor(x_m1)
    feat = state.encoder.forward(state.encoder_params, x)
    mu = state.mu_head.forward(state.mu_params, feat)
    logvar = state.logvar_head.forward(state.logvar_params, feat)
    if sample_noise:
        noise = state.rng.standard_normal(mu.shape)
    else:
        noise = np.zeros(mu.shape)
    z = mu + T.exp(logvar * 0.5) * Tensor(noise)
    return LatentBatch(mu=mu, logvar=logvar, z=z, noise=noise)


def reconstruction_losses(state: SamplerState, x_m1, x_m2, latent: LatentBatch):
    """Per-pixel MSE through each decoder from the shared latent code."""
    x1 = x_m1 if isinstance(x_m1, Tensor) else Tensor(x_m1)
    rec1 = state.decoder_m1.forward(state.decoder_m1_params, latent.z)
    loss_m1 = T.mean(T.square(rec1 - x1))
    if state.config.mode != "mvaal":
        return loss_m1, None
    if state.decoder_m2 is None:
        raise SamplerConfigError("mvaal mode requires decoder-m2")
    if x_m2 is None:
        raise SamplerConfigError("mvaal mode requires m2 images")
    x2 = x_m2 if isinstance(x_m2, Tensor) else Tensor(x_m2)
    rec2 = state.decoder_m2.forward(state.decoder_m2_params, latent.z)
    return loss_m1, T.mean(T.square(rec2 - x2))


def kl_divergence(latent: LatentBatch) -> Tensor:
    """KL(q(z|x) || N(0,I)), mean over the batch."""
    mu, logvar = latent.mu, latent.logvar
    per_dim = 1.0 + logvar - T.square(mu) - T.exp(logvar)
    return T.mean(T.sum_(per_dim, axis=1)) * -0.5


def vae_adversarial_loss(state: SamplerState, z_labeled: LatentBatch, z_unlabeled: LatentBatch) -> Tensor:
    """E[D(z)] - E[D(z*)], with the critic's parameters held fixed."""
    if z_labeled.z.shape[0] == 0 or z_unlabeled.z.shape[0] == 0:
        raise SamplerConfigError("adversarial loss needs nonempty batches")
    frozen = state.disc_params_detached()
    # separate passes: each pool is normalized by its own batch statistics,
    # so the encoder cannot game the critic through the shared-mean channel
    return T.mean(state.disc_forward(frozen, z_labeled.z)) - \
        T.mean(state.disc_forward(frozen, z_unlabeled.z))


def discriminator_loss(state: SamplerState, z_labeled: LatentBatch, z_unlabeled: LatentBatch):
    """WGAN-GP critic loss on detached latents; returns (loss, gp_term)."""
    zl = z_labeled.z.detach()
    zu = z_unlabeled.z.detach()
    if zl.shape[0] != zu.shape[0]:
        raise SamplerConfigError(
            f"discriminator batches must match: {zl.shape[0]} vs {zu.shape[0]}")
    # joint pass: per-pool batch norm would cancel the very shift D must learn
    scores = state.disc_forward(state.disc_params, T.concat([zl, zu]))
    score = -T.mean(scores[:zl.shape[0]]) + T.mean(scores[zl.shape[0]:])
    epsv = state.rng.uniform(0.0, 1.0, size=(zl.shape[0], 1))
    zhat = Tensor(epsv * zl.data + (1.0 - epsv) * zu.data)
    with _mode(state.disc_params, "evaluation"):
        gp = T.grad_penalty_kernel(
            lambda z: state.disc_forward(state.disc_params, z), zhat, state.config.lambda_gp)
    return score + gp, gp


def _batches(n, batch_size, order):
    for i in range(0, n, batch_size):
        idx = order[i:i + batch_size]
        if len(idx) >= 2:
            yield idx


class _Cycler:
    """Cycles a shuffled index stream, reshuffling on exhaustion."""

    def __init__(self, n, rng):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def take(self, k):
        out = []
        while len(out) < k:
            if self.pos >= self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            out.append(self.order[self.pos])
            self.pos += 1
        return np.array(out)


def train_sampler_epoch(state: SamplerState, labeled_m1, labeled_m2,
                        unlabeled_m1, unlabeled_m2, epoch: int = 0) -> EpochLosses:
    """One alternating pass: per mini-batch a VAE step, then one critic step."""
    cfg = state.config
    n_lab = labeled_m1.shape[0]
    n_unl = unlabeled_m1.shape[0]
    if n_unl == 0:
        raise SamplerConfigError("unlabeled pool is empty")
    use_m2 = cfg.mode == "mvaal" and cfg.gamma3 > 0.0

    order = state.rng.permutation(n_lab)
    cycler = _Cycler(n_unl, state.rng)
    sums = np.zeros(6)
    nb = 0

    for lidx in _batches(n_lab, cfg.batch_size, order):
        uidx = cycler.take(len(lidx))
        xl = Tensor(labeled_m1[lidx])
        xu = Tensor(unlabeled_m1[uidx])

        # VAE phase
        lat_l = encode(state, xl, sample_noise=True)
        lat_u = encode(state, xu, sample_noise=True)
        if use_m2:
            rm1_l, rm2_l = reconstruction_losses(state, xl, Tensor(labeled_m2[lidx]), lat_l)
            rm1_u, rm2_u = reconstruction_losses(state, xu, Tensor(unlabeled_m2[uidx]), lat_u)
        else:
            rm1_l, rm2_l = reconstruction_losses_m1only(state, xl, lat_l), None
            rm1_u, rm2_u = reconstruction_losses_m1only(state, xu, lat_u), None
        kl = kl_divergence(lat_l) + kl_divergence(lat_u)
        adv = vae_adversarial_loss(state, lat_l, lat_u)
        loss_vae = cfg.gamma1 * adv + cfg.gamma2 * (rm1_l + rm1_u) + cfg.beta_kl * kl
        rm2_val = 0.0
        if use_m2:
            loss_vae = loss_vae + cfg.gamma3 * (rm2_l + rm2_u)
            rm2_val = rm2_l.item() + rm2_u.item()
        if not np.isfinite(loss_vae.item()):
            raise FloatingPointError(f"non-finite VAE loss at epoch {epoch}")
        nn.optimizer_step(state.opt_vae, state.vae_params,
                          nn.compute_grads(loss_vae, state.vae_params))

        # critic phase: re-encode so the critic sees post-update latents
        lat_l2 = encode(state, xl, sample_noise=True)
        lat_u2 = encode(state, xu, sample_noise=True)
        loss_d, gp = discriminator_loss(state, lat_l2, lat_u2)
        if not np.isfinite(loss_d.item()):
            raise FloatingPointError(f"non-finite critic loss at epoch {epoch}")
        nn.optimizer_step(state.opt_disc, state.disc_params,
                          nn.compute_grads(loss_d, state.disc_params))

        sums += [adv.item(), rm1_l.item() + rm1_u.item(), rm2_val,
                 kl.item(), loss_d.item(), gp.item()]
        nb += 1

    if nb == 0:
        raise SamplerConfigError("labeled pool too small for one mini-batch")
    means = sums / nb
    return EpochLosses(epoch, *means)


def reconstruction_losses_m1only(state: SamplerState, x_m1, latent: LatentBatch) -> Tensor:
    x1 = x_m1 if isinstance(x_m1, Tensor) else Tensor(x_m1)
    rec1 = state.decoder_m1.forward(state.decoder_m1_params, latent.z)
    return T.mean(T.square(rec1 - x1))


def discriminator_scores(state: SamplerState, x_m1, batch_size=256) -> np.ndarray:
    """Deterministic critic scores (z = mu, critic in evaluation mode)."""
    scores = []
    with _mode(state.disc_params, "evaluation"), T.no_grad():
        for i in range(0, x_m1.shape[0], batch_size):
            lat = encode(state, Tensor(x_m1[i:i + batch_size]), sample_noise=False)
            scores.append(state.disc_forward(state.disc_params, lat.z).data)
    return np.concatenate(scores) if scores else np.zeros(0)


def select_for_annotation(state: SamplerState, unlabeled_m1, pool_indices, b: int):
    """The b pool indices with the lowest critic scores, sorted ascending."""
    pool_indices = np.asarray(pool_indices)
    if b > len(pool_indices):
        raise ValueError(f"budget {b} exceeds pool size {len(pool_indices)}")
    scores = discriminator_scores(state, unlabeled_m1)
    # stable order: score ascending, dataset index breaks ties
    ranked = np.lexsort((pool_indices, scores))
    return sorted(int(pool_indices[i]) for i in ranked[:b])
