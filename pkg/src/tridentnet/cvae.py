"""Conditional generative trajectory model.

Conv stacks encode the plan and scene rasters into a map embedding m. A
categorical latent z with a learned prior p(z|m) selects a driving mode; a
recognition network q(z|m,y) sees the ground-truth future during training;
a GRU decodes each mode into a sequence of diagonal Gaussians over ego-frame
waypoints. Because the latent is a small finite set, every expectation over z
is computed by exact enumeration rather than sampling.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Rng, Tensor, adam_step, backward
from .dataset import LoadedSample, Sample, Trajectory

CKPT_MAGIC = b"TDNT"
CKPT_VERSION = 1

LOG_2PI = math.log(2.0 * math.pi)


class BadMode(ValueError):
    pass


class BadMagic(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass
class ModelConfig:
    horizon: int
    num_modes: int = 12
    plan_channels: int = 2
    scene_channels: int = 6
    plan_size: int = 200
    scene_size: int = 400
    conv_channels: tuple[int, ...] = (8, 16, 32, 32)
    conv_kernel: int = 3
    conv_stride: int = 2
    enc_dense: int = 64
    embed_dim: int = 128
    recog_hidden: int = 32
    dec_hidden: int = 64
    sigma_min: float = 1e-3
    sigma_max: float = 10.0

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if self.horizon < 1 or self.num_modes < 1:
            raise ConfigMismatch("horizon and num_modes must be >= 1")
        if self.sigma_min <= 0 or self.sigma_max < self.sigma_min:
            raise ConfigMismatch("need 0 < sigma_min <= sigma_max")
        for size in (self.plan_size, self.scene_size):
            if self._conv_out(size) < 1:
                raise ConfigMismatch(f"conv stack collapses a {size}px raster")

    def _conv_out(self, size: int) -> int:
        for _ in self.conv_channels:
            size = (size - self.conv_kernel) // self.conv_stride + 1
        return size

    def flat_dim(self, size: int) -> int:
        return self.conv_channels[-1] * self._conv_out(size) ** 2

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class CategoricalDist:
    log_probs: np.ndarray  # (num_modes,)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


@dataclass
class GaussianSeq:
    mu: np.ndarray  # (H, 2) meters
    sigma: np.ndarray  # (H, 2) meters


@dataclass
class LossParts:
    total: float
    nll: float
    kl: float
    mse: float


def sample_arrays(sample: Sample | LoadedSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(plan, scene, target) float64 arrays from either sample representation."""
    if isinstance(sample, LoadedSample):
        return sample.plan, sample.scene, sample.target
    plan = np.stack([sample.plan.roads, sample.plan.route]).astype(np.float64)
    scene = sample.scene.onehot.astype(np.float64)
    return plan, scene, sample.target.waypoints


class CvaeModel:
    """Parameters plus the forward graphs for training and inference."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.store = ParamStore()
        rng = Rng(seed)
        cfg = config
        for side, ch_in in (("plan", cfg.plan_channels), ("scene", cfg.scene_channels)):
            c_prev = ch_in
            for i, c_out in enumerate(cfg.conv_channels):
                self.store.add_conv(rng, f"{side}.conv{i}.w", c_out, c_prev,
                                    cfg.conv_kernel, cfg.conv_kernel)
                self.store.add_bias(rng, f"{side}.conv{i}.b", (c_out, 1, 1))
                c_prev = c_out
            size = cfg.plan_size if side == "plan" else cfg.scene_size
            self.store.add_dense(rng, f"{side}.dense.w", cfg.flat_dim(size), cfg.enc_dense)
            self.store.add_bias(rng, f"{side}.dense.b", (cfg.enc_dense,))
        self.store.add_dense(rng, "fusion.w", 2 * cfg.enc_dense, cfg.embed_dim)
        self.store.add_bias(rng, "fusion.b", (cfg.embed_dim,))
        self.store.add_dense(rng, "prior.w", cfg.embed_dim, cfg.num_modes)
        self.store.add_bias(rng, "prior.b", (cfg.num_modes,))
        for d in ("fwd", "bwd"):
            self.store.add_dense(rng, f"recog.{d}.wx", 2, 4 * cfg.recog_hidden)
            self.store.add_dense(rng, f"recog.{d}.wh", cfg.recog_hidden, 4 * cfg.recog_hidden)
            self.store.add_bias(rng, f"recog.{d}.b", (4 * cfg.recog_hidden,))
        self.store.add_dense(rng, "recog.head.w", 2 * cfg.recog_hidden + cfg.embed_dim,
                             cfg.num_modes)
        self.store.add_bias(rng, "recog.head.b", (cfg.num_modes,))
        self.store.add_dense(rng, "dec.h0.w", cfg.embed_dim + cfg.num_modes, cfg.dec_hidden)
        self.store.add_bias(rng, "dec.h0.b", (cfg.dec_hidden,))
        for gate in ("z", "r", "n"):
            self.store.add_dense(rng, f"dec.wx{gate}", 2, cfg.dec_hidden)
            self.store.add_dense(rng, f"dec.wh{gate}", cfg.dec_hidden, cfg.dec_hidden)
            self.store.add_bias(rng, f"dec.b{gate}", (cfg.dec_hidden,))
        self.store.add_dense(rng, "dec.head.w", cfg.dec_hidden, 4)
        self.store.add_bias(rng, "dec.head.b", (4,))

    # -- batched graphs -----------------------------------------------------

    def _conv_stack(self, x: Tensor, side: str, size: int) -> Tensor:
        p = self.store
        for i in range(len(self.config.conv_channels)):
            x = ad.relu(ad.add(ad.conv2d(x, p[f"{side}.conv{i}.w"], self.config.conv_stride),
                               p[f"{side}.conv{i}.b"]))
        n = x.data.shape[0]
        x = ad.reshape(x, (n, self.config.flat_dim(size)))
        return ad.relu(ad.add(ad.matmul(x, p[f"{side}.dense.w"]), p[f"{side}.dense.b"]))

    def _encode_t(self, plan: Tensor, scene: Tensor) -> Tensor:
        a = self._conv_stack(plan, "plan", self.config.plan_size)
        b = self._conv_stack(scene, "scene", self.config.scene_size)
        fused = ad.concat([a, b], axis=1)
        return ad.add(ad.matmul(fused, self.store["fusion.w"]), self.store["fusion.b"])

    def _prior_t(self, m: Tensor) -> Tensor:
        return ad.log_softmax(
            ad.add(ad.matmul(m, self.store["prior.w"]), self.store["prior.b"]), axis=1
        )

    def _recog_t(self, m: Tensor, y: Tensor) -> Tensor:
        enc = ad.bilstm_encode(y, self.store.as_dict(), "recog.", self.config.recog_hidden)
        joint = ad.concat([enc, m], axis=1)
        return ad.log_softmax(
            ad.add(ad.matmul(joint, self.store["recog.head.w"]), self.store["recog.head.b"]),
            axis=1,
        )

    def _decode_rows_t(self, m_rows: Tensor, onehot: np.ndarray) -> tuple[list[Tensor], list[Tensor]]:
        """Decode one Gaussian sequence per row of (m, mode-onehot)."""
        cfg = self.config
        p = self.store
        rows = m_rows.data.shape[0]
        h = ad.add(ad.matmul(ad.concat([m_rows, Tensor(onehot)], axis=1), p["dec.h0.w"]),
                   p["dec.h0.b"])
        x = Tensor(np.zeros((rows, 2)))
        mus: list[Tensor] = []
        logsigs: list[Tensor] = []
        lo = math.log(cfg.sigma_min)
        hi = math.log(cfg.sigma_max)
        for _ in range(cfg.horizon):
            h = ad.gru_cell(x, h, p.as_dict(), "dec.")
            out = ad.add(ad.matmul(h, p["dec.head.w"]), p["dec.head.b"])
            mu = out[:, 0:2]
            logsig = ad.clip(out[:, 2:4], lo, hi)
            mus.append(mu)
            logsigs.append(logsig)
            x = mu
        return mus, logsigs

    def _mode_expand(self, m: Tensor, n: int) -> tuple[Tensor, np.ndarray]:
        z = self.config.num_modes
        idx = np.repeat(np.arange(n), z)
        onehot = np.tile(np.eye(z), (n, 1))
        return ad.gather_row(m, idx), onehot

    def _per_mode_terms_t(self, m: Tensor, y: np.ndarray) -> tuple[Tensor, Tensor]:
        """(log p(y|m,z), mean squared error) as (n, num_modes) tensors."""
        n = m.data.shape[0]
        z = self.config.num_modes
        h = self.config.horizon
        m_rep, onehot = self._mode_expand(m, n)
        mus, logsigs = self._decode_rows_t(m_rep, onehot)
        y_rep = np.repeat(y, z, axis=0)  # (n*z, H, 2)
        logp = Tensor(np.zeros(n * z))
        sq = Tensor(np.zeros(n * z))
        for t in range(h):
            diff = ad.sub(Tensor._node(y_rep[:, t, :].copy(), (), None), mus[t])
            zscore = ad.mul(diff, ad.exp(ad.mul(logsigs[t], -1.0)))
            step_logp = ad.reduce_sum(
                ad.sub(ad.mul(ad.mul(zscore, zscore), -0.5),
                       ad.add(logsigs[t], 0.5 * LOG_2PI)),
                axis=1,
            )
            logp = ad.add(logp, step_logp)
            sq = ad.add(sq, ad.reduce_sum(ad.mul(diff, diff), axis=1))
        logp_mat = ad.reshape(logp, (n, z))
        mse_mat = ad.mul(ad.reshape(sq, (n, z)), 1.0 / h)
        return logp_mat, mse_mat

    def _loss_t(self, plan: Tensor, scene: Tensor, y: np.ndarray) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Batch-mean (total, nll, kl, mse); expectations enumerate all modes."""
        m = self._encode_t(plan, scene)
        q_log = self._recog_t(m, Tensor._node(y, (), None))
        p_log = self._prior_t(m)
        logp_mat, mse_mat = self._per_mode_terms_t(m, y)
        q = ad.exp(q_log)
        nll = ad.reduce_mean(ad.mul(ad.reduce_sum(ad.mul(q, logp_mat), axis=1), -1.0))
        kl = ad.reduce_mean(ad.reduce_sum(ad.mul(q, ad.sub(q_log, p_log)), axis=1))
        mse = ad.reduce_mean(ad.reduce_sum(ad.mul(q, mse_mat), axis=1))
        total = ad.add(ad.add(nll, kl), mse)
        return total, nll, kl, mse

    # -- public single-sample API -------------------------------------------

    def encode_condition(self, plan: np.ndarray, scene: np.ndarray) -> np.ndarray:
        """Map embedding m for one (plan, scene) raster pair."""
        self._check_rasters(plan, scene)
        m = self._encode_t(Tensor._node(plan[None], (), None),
                           Tensor._node(scene[None], (), None))
        return m.data[0].copy()

    def prior(self, m: np.ndarray) -> CategoricalDist:
        out = self._prior_t(Tensor(m[None]))
        return CategoricalDist(log_probs=out.data[0].copy())

    def recognition(self, m: np.ndarray, y: np.ndarray) -> CategoricalDist:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.config.horizon, 2):
            raise ad.ShapeMismatch(
                f"trajectory shape {y.shape} vs ({self.config.horizon}, 2)")
        out = self._recog_t(Tensor(m[None]), Tensor(y[None]))
        return CategoricalDist(log_probs=out.data[0].copy())

    def decode(self, m: np.ndarray, z: int) -> GaussianSeq:
        if not (0 <= z < self.config.num_modes):
            raise BadMode(f"mode {z} out of range [0, {self.config.num_modes})")
        onehot = np.zeros((1, self.config.num_modes))
        onehot[0, z] = 1.0
        mus, logsigs = self._decode_rows_t(Tensor(m[None]), onehot)
        mu = np.stack([t.data[0] for t in mus])
        sigma = np.exp(np.stack([t.data[0] for t in logsigs]))
        return GaussianSeq(mu=mu, sigma=sigma)

    def loss_parts(self, plan: np.ndarray, scene: np.ndarray, y: np.ndarray) -> LossParts:
        self._check_rasters(plan, scene)
        total, nll, kl, mse = self._loss_t(
            Tensor._node(plan[None], (), None), Tensor._node(scene[None], (), None),
            np.asarray(y, dtype=np.float64)[None],
        )
        return LossParts(total.item(), nll.item(), kl.item(), mse.item())

    def log_marginal(self, plan: np.ndarray, scene: np.ndarray, y: np.ndarray) -> float:
        """log p(y | m), exact by summing the finite latent set."""
        self._check_rasters(plan, scene)
        m = self._encode_t(Tensor._node(plan[None], (), None),
                           Tensor._node(scene[None], (), None))
        p_log = self._prior_t(m)
        logp_mat, _ = self._per_mode_terms_t(m, np.asarray(y, dtype=np.float64)[None])
        return ad.logsumexp(ad.add(logp_mat, p_log), axis=1).item()

    def infer_map(self, plan: np.ndarray, scene: np.ndarray) -> Trajectory:
        """Decode the most probable mode under the prior into waypoints."""
        m = self.encode_condition(plan, scene)
        dist = self.prior(m)
        z_star = int(np.argmax(dist.log_probs))  # ties -> smallest index
        seq = self.decode(m, z_star)
        return Trajectory(waypoints=seq.mu, spacing=float("nan"))

    def infer_full(self, plan: np.ndarray, scene: np.ndarray) -> list[tuple[float, GaussianSeq]]:
        """All modes with their prior weights; weights sum to one."""
        m = self.encode_condition(plan, scene)
        dist = self.prior(m)
        return [(float(w), self.decode(m, z))
                for z, w in enumerate(dist.probs())]

    def _check_rasters(self, plan: np.ndarray, scene: np.ndarray) -> None:
        cfg = self.config
        want_p = (cfg.plan_channels, cfg.plan_size, cfg.plan_size)
        want_s = (cfg.scene_channels, cfg.scene_size, cfg.scene_size)
        if plan.shape != want_p:
            raise ad.ShapeMismatch(f"plan raster {plan.shape} vs {want_p}")
        if scene.shape != want_s:
            raise ad.ShapeMismatch(f"scene raster {scene.shape} vs {want_s}")


def loss(model: CvaeModel, sample: Sample | LoadedSample) -> LossParts:
    """Training loss of one sample (NLL + KL + mode-weighted MSE)."""
    return model.loss_parts(*sample_arrays(sample))


def log_marginal(model: CvaeModel, sample: Sample | LoadedSample) -> float:
    return model.log_marginal(*sample_arrays(sample))


# ---------------------------------------------------------------------------
# checkpoints: magic TDNT, u32 version, u32 header length, JSON header, then
# per parameter in insertion order: f64 LE value, Adam m, Adam v blobs


def save_checkpoint(model: CvaeModel, path: str | Path) -> None:
    header = {
        "config": asdict(model.config),
        "adam_t": model.store.adam_t,
        "param_names": model.store.names(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(blob)), blob]
    for name, p in model.store.items():
        parts.append(p.data.astype("<f8").tobytes())
        parts.append(model.store.adam_m[name].astype("<f8").tobytes())
        parts.append(model.store.adam_v[name].astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> CvaeModel:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != CKPT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CKPT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    if len(data) < 12 + hlen:
        raise BadMagic(f"{path}: truncated header")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    config = ModelConfig.from_dict(header["config"])
    model = CvaeModel(config, seed=0)
    if header["param_names"] != model.store.names():
        raise ConfigMismatch(f"{path}: parameter layout does not match config")
    model.store.adam_t = int(header["adam_t"])
    off = 12 + hlen
    for name, p in model.store.items():
        for target in (p.data, model.store.adam_m[name], model.store.adam_v[name]):
            nbytes = target.size * 8
            if off + nbytes > len(data):
                raise BadMagic(f"{path}: truncated parameter data")
            target[...] = np.frombuffer(data, dtype="<f8", count=target.size,
                                        offset=off).reshape(target.shape)
            off += nbytes
    if off != len(data):
        raise ConfigMismatch(f"{path}: {len(data) - off} trailing bytes")
    return model


# ---------------------------------------------------------------------------
# training


def train_model(
    model: CvaeModel,
    plans: np.ndarray,
    scenes: np.ndarray,
    targets: np.ndarray,
    epochs: int,
    batch_size: int = 16,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    progress: bool = False,
) -> list[dict]:
    """Full-epoch sweeps in a fixed sample order; returns per-epoch loss rows.

    Batches are contiguous slices and gradients are reduced in sample order,
    so identical inputs and seed give bit-identical parameter trajectories.
    """
    n = len(plans)
    if not (len(scenes) == n == len(targets)):
        raise ad.ShapeMismatch("plans, scenes, targets must have equal length")
    batches = []
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        batches.append((
            Tensor._node(np.ascontiguousarray(plans[lo:hi], dtype=np.float64), (), None),
            Tensor._node(np.ascontiguousarray(scenes[lo:hi], dtype=np.float64), (), None),
            np.ascontiguousarray(targets[lo:hi], dtype=np.float64),
        ))
    history: list[dict] = []
    step = 0
    for epoch in range(1, epochs + 1):
        sums = np.zeros(4)
        for plan_t, scene_t, y in batches:
            model.store.zero_grad()
            total, nll, kl, mse = model._loss_t(plan_t, scene_t, y)
            backward(total)
            adam_step(model.store, model.store.grads(), lr, beta1, beta2)
            step += 1
            sums += (total.item(), nll.item(), kl.item(), mse.item())
        row = {
            "epoch": epoch,
            "step": step,
            "total": sums[0] / len(batches),
            "nll": sums[1] / len(batches),
            "kl": sums[2] / len(batches),
            "mse": sums[3] / len(batches),
        }
        history.append(row)
        if progress and (epoch % max(1, epochs // 20) == 0 or epoch == epochs):
            print(f"epoch {epoch}/{epochs}  total={row['total']:.4f}  "
                  f"nll={row['nll']:.4f}  kl={row['kl']:.4f}  mse={row['mse']:.4f}")
    return history


def history_csv(history: list[dict]) -> str:
    lines = ["epoch,step,total,nll,kl,mse"]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['step']},{row['total']!r},{row['nll']!r},"
            f"{row['kl']!r},{row['mse']!r}"
        )
    return "\n".join(lines) + "\n"
