"""Adversarial training with the composite generator loss, plus the two
auxiliary fits it relies on or is compared with: the task network and a UNet regressor."""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .dataset import RadioDataset, load_dataset, make_synthetic_dataset
from .errors import ConfigError, NumericalAbort
from .features import build_condition, derive_seed, draw_samples
from .models import Discriminator, Generator, UNet, discriminator_input
from .rdm import RdmParams
from .scene import OutageParams, SimParams, outage_map

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("step", "L_G", "L_MSE", "L_R", "L_D", "L")

# stream tags for derive_seed
_BATCH, _SAMPLES, _EVAL = 1, 2, 3


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    checkpoint: str | None = None
    initial_test_mse: float | None = None
    final_test_mse: float | None = None

    def log(self, step, lg, lm, lr, ld, total):
        self.records.append((step, lg, lm, lr, ld, total))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(REPORT_COLUMNS)
            for rec in self.records:
                w.writerow([rec[0]] + [repr(float(v)) for v in rec[1:]])

    def column(self, name):
        i = REPORT_COLUMNS.index(name)
        return np.array([r[i] for r in self.records])


def dataset_from_config(cfg):
    d = cfg.data
    rdm = RdmParams(cfg.rdm_lambda)
    if d.manifest:
        return load_dataset(cfg.path(d.manifest), rdm)
    sim = SimParams(d.ref_power_db, d.pathloss_exponent, d.wall_loss_db, d.shadow_sigma_db, d.floor_db)
    return make_synthetic_dataset(d.n_scenes, d.size, d.n_buildings, d.n_tx, d.seed, sim, rdm)


def _check_finite(value, step, what):
    if not math.isfinite(value):
        raise NumericalAbort(f"{what} became {value}", step)


class BatchStream:
    """Deterministic minibatches: epoch-wise seeded permutations of the training maps,
    with a fresh seeded sparse sample per (step, slot)."""

    def __init__(self, items, cfg):
        if not items:
            raise ConfigError("training split is empty")
        self.items = items
        self.cfg = cfg
        self._order = []
        self._epoch = 0

    def _next_index(self):
        if not self._order:
            rng = np.random.default_rng(derive_seed(self.cfg.seed, _BATCH, self._epoch))
            self._order = list(rng.permutation(len(self.items)))
            self._epoch += 1
        return self._order.pop()

    def next(self, step):
        cfg = self.cfg
        conds, ys = [], []
        for slot in range(cfg.batch_size):
            it = self.items[self._next_index()]
            s = draw_samples(it, cfg.sr, derive_seed(cfg.seed, _SAMPLES, step, slot),
                             cfg.low_threshold, cfg.noise_snr_db)
            conds.append(build_condition(it, s, cfg.use_rdm))
            ys.append(it.radiomap.values[None])
        return np.stack(conds), np.stack(ys)


def fixed_eval_batch(items, cfg, seed=None):
    """Conditions and targets for a split with one fixed sample draw per map."""
    seed = cfg.eval.seed if seed is None else seed
    conds = [build_condition(it, draw_samples(it, cfg.sr, derive_seed(seed, _EVAL, i), cfg.low_threshold),
                             cfg.use_rdm) for i, it in enumerate(items)]
    return np.stack(conds), np.stack([it.radiomap.values[None] for it in items])


def predict(model, conds, batch=16):
    out = [model(Tensor(conds[i:i + batch])).data for i in range(0, len(conds), batch)]
    return np.concatenate(out)


def _mse(a, b):
    d = a - b
    return float(np.mean(d * d))


# ---------------------------------------------------------------- TIN

def pretrain_tin(dataset, cfg, report=None):
    """Fit the UNet outage network on ground-truth radiomaps; returns the frozen network."""
    items = dataset.split("train")
    if not items:
        raise ConfigError("training split is empty")
    tin = UNet(cfg.tin, seed=derive_seed(cfg.seed, 11))
    opt = Adam(tin.parameters(), cfg.lr_tin, (cfg.adam_beta1, cfg.adam_beta2))
    thr = OutageParams(cfg.outage_threshold)
    rms = np.stack([it.radiomap.values[None] for it in items])
    zs = outage_map(rms, thr)
    report = report if report is not None else TrainReport()
    rng = np.random.default_rng(derive_seed(cfg.seed, _BATCH, 11))
    report.initial_test_mse = _mse(predict(tin, rms), zs)
    for step in range(cfg.tin_steps):
        idx = rng.choice(len(items), size=min(cfg.batch_size, len(items)), replace=False)
        opt.zero_grad()
        loss = ad.mse_loss(tin(Tensor(rms[idx])), zs[idx])
        lv = loss.item()
        _check_finite(lv, step, "TIN loss")
        loss.backward()
        opt.step()
        if step % cfg.log_every == 0:
            report.log(step, 0.0, 0.0, lv, 0.0, lv)
    report.final_test_mse = _mse(predict(tin, rms), zs)
    return tin.freeze()


def load_tin(path, cfg):
    tin = UNet(cfg.tin)
    tin.load_state_dict(load_checkpoint(path))
    return tin.freeze()


# ---------------------------------------------------------------- conditional GAN

@dataclass
class GeneratorLoss:
    total: Tensor
    l_g: Tensor
    l_mse: Tensor
    l_r: float


def generator_loss(gen, disc, tin, cond, y, cfg, fake=None):
    """Composite generator objective L_G + alpha·L_MSE + beta·L_R.

    The task term only enters the graph when beta > 0, so beta = 0 reproduces a
    run without any task network exactly. ``l_r`` is still reported when a task
    network is available.
    """
    fake = gen(Tensor(cond)) if fake is None else fake
    d_fake = disc(discriminator_input(fake, cond, cfg.discriminator.conditioning_mode, real=False))
    if cfg.gan_loss_variant == "nonsaturating":
        l_g = ad.bce_loss(d_fake, np.ones(d_fake.shape))
    else:
        l_g = -ad.bce_loss(d_fake, np.zeros(d_fake.shape))
    l_mse = ad.mse_loss(fake, y)
    total = l_g + cfg.alpha * l_mse
    l_r = 0.0
    if tin is not None:
        z = outage_map(y, OutageParams(cfg.outage_threshold))
        if cfg.beta > 0:
            lr_t = ad.mse_loss(tin(fake), z)
            total = total + cfg.beta * lr_t
            l_r = lr_t.item()
        else:
            l_r = _mse(tin(Tensor(fake.data)).data, z)
    return GeneratorLoss(total, l_g, l_mse, l_r)


def _set_trainable(module, flag):
    for p in module.parameters():
        p.requires_grad = flag


def train_tiregan(dataset, tin, cfg, report=None, eval_items=None):
    """Alternate one discriminator step and one generator step per iteration.

    Returns (generator, TrainReport). ``tin`` may be None only when beta == 0.
    """
    if tin is None and cfg.beta > 0:
        raise ConfigError("beta > 0 needs a pretrained task network")
    if tin is not None:
        tin.freeze()
    gen = Generator(cfg.generator, seed=derive_seed(cfg.seed, 21))
    disc = Discriminator(cfg.discriminator, seed=derive_seed(cfg.seed, 22))
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = Adam(gen.parameters(), cfg.lr_g, betas)
    opt_d = Adam(disc.parameters(), cfg.lr_d, betas)
    stream = BatchStream(dataset.split("train"), cfg)
    mode = cfg.discriminator.conditioning_mode
    report = report if report is not None else TrainReport()
    eval_items = dataset.split("test") if eval_items is None else eval_items
    if eval_items:
        ec, ey = fixed_eval_batch(eval_items, cfg)
        report.initial_test_mse = _mse(predict(gen, ec), ey)

    for step in range(cfg.steps):
        cond, y = stream.next(step)
        fake = gen(Tensor(cond))

        # discriminator: real vs detached generated
        _set_trainable(disc, True)
        opt_d.zero_grad()
        d_real = disc(discriminator_input(Tensor(y), cond, mode, real=True))
        d_fake = disc(discriminator_input(Tensor(fake.data), cond, mode, real=False))
        l_d = ad.bce_loss(d_real, np.ones(d_real.shape)) + ad.bce_loss(d_fake, np.zeros(d_fake.shape))
        ld = l_d.item()
        _check_finite(ld, step, "discriminator loss")
        l_d.backward()
        opt_d.step()

        # generator: discriminator held fixed, gradients flow through the frozen TIN
        _set_trainable(disc, False)
        opt_g.zero_grad()
        parts = generator_loss(gen, disc, tin, cond, y, cfg, fake=fake)
        total = parts.total.item()
        _check_finite(total, step, "generator loss")
        parts.total.backward()
        opt_g.step()
        if step % cfg.log_every == 0:
            report.log(step, parts.l_g.item(), parts.l_mse.item(), parts.l_r, ld, total)
    _set_trainable(disc, True)
    if eval_items:
        report.final_test_mse = _mse(predict(gen, ec), ey)
    return gen, report


# ---------------------------------------------------------------- UNet regressor

def train_unet_regressor(dataset, cfg, report=None, eval_items=None):
    """UNet from the stacked 4-plane input straight to the radiomap, pure MSE."""
    if cfg.regressor.in_channels != 4:
        raise ConfigError("regressor takes the 4-plane generator input")
    net = UNet(cfg.regressor, seed=derive_seed(cfg.seed, 31))
    opt = Adam(net.parameters(), cfg.lr_regressor, (cfg.adam_beta1, cfg.adam_beta2))
    stream = BatchStream(dataset.split("train"), cfg)
    report = report if report is not None else TrainReport()
    eval_items = dataset.split("test") if eval_items is None else eval_items
    if eval_items:
        ec, ey = fixed_eval_batch(eval_items, cfg)
        report.initial_test_mse = _mse(predict(net, ec), ey)
    for step in range(cfg.steps):
        cond, y = stream.next(step)
        opt.zero_grad()
        loss = ad.mse_loss(net(Tensor(cond)), y)
        lv = loss.item()
        _check_finite(lv, step, "regressor loss")
        loss.backward()
        opt.step()
        if step % cfg.log_every == 0:
            report.log(step, 0.0, lv, 0.0, 0.0, lv)
    if eval_items:
        report.final_test_mse = _mse(predict(net, ec), ey)
    return net, report


# ---------------------------------------------------------------- file-level entry points

def _tin_path(cfg):
    return cfg.path(cfg.tin_checkpoint) if cfg.tin_checkpoint else cfg.out_path / "tin.ckpt"


def run_pretrain_tin(cfg, dataset=None):
    dataset = dataset or dataset_from_config(cfg)
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    report = TrainReport()
    tin = pretrain_tin(dataset, cfg, report)
    path = out / "tin.ckpt"
    save_checkpoint(path, tin.state_dict())
    report.checkpoint = str(path)
    report.write_csv(out / "tin_report.csv")
    return report


def run_train(cfg, dataset=None):
    dataset = dataset or dataset_from_config(cfg)
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    tin = None
    if cfg.beta > 0:
        p = _tin_path(cfg)
        if not Path(p).exists():
            raise ConfigError(f"beta > 0 but no task-network checkpoint at {p}; run pretrain-tin first")
        tin = load_tin(p, cfg)
    gen, report = train_tiregan(dataset, tin, cfg)
    path = out / "generator.ckpt"
    save_checkpoint(path, gen.state_dict())
    report.checkpoint = str(path)
    report.write_csv(out / "train_report.csv")
    return report


def run_train_baseline(cfg, dataset=None):
    dataset = dataset or dataset_from_config(cfg)
    out = cfg.out_path
    out.mkdir(parents=True, exist_ok=True)
    net, report = train_unet_regressor(dataset, cfg)
    path = out / "regressor.ckpt"
    save_checkpoint(path, net.state_dict())
    report.checkpoint = str(path)
    report.write_csv(out / "regressor_report.csv")
    return report
