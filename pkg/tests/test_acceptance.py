"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
The smoke-training criterion is marked slow (tens of minutes on one core).
"""

import sys
import time

import numpy as np
import pytest

from oracles import finite_difference, naive_idw, naive_kriging, naive_mse, naive_nmse, naive_rdm, rel_err, \
    supersample_cells
from tire_rme import autodiff as ad
from tire_rme import train as tr
from tire_rme.autodiff import Tensor
from tire_rme.config import DataConfig, TrainConfig, config_from_dict
from tire_rme.dataset import SampleSet, make_synthetic_dataset
from tire_rme.evaluate import IdwEstimator, evaluate_estimator, mse, nmse, sweep_noise
from tire_rme.grid import BinaryGrid, los_pixels
from tire_rme.interp import VariogramModel, idw_interpolate, kriging_solve
from tire_rme.models import Discriminator, DiscriminatorConfig, GeneratorConfig, TinConfig, UNet
from tire_rme.rdm import RdmParams, depth_sum, radio_depth_map
from tire_rme.scene import Scene

SMOKE_SEEDS = (0, 1, 2)
ABLATION_SEEDS = (0, 1, 2, 3, 4)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def scene_from(mask, txs):
    return Scene(BinaryGrid(np.asarray(mask, dtype=np.uint8)), tuple(txs))


def random_scene(seed, n=8, density=0.3):
    rng = np.random.default_rng(seed)
    mask = (rng.random((n, n)) < density).astype(np.uint8)
    flat = rng.choice(n * n, size=int(rng.integers(1, 4)), replace=False)
    txs = [(int(f % n), int(f // n)) for f in flat]
    for x, y in txs:
        mask[y, x] = 0
    return scene_from(mask, txs)


def tiny_cfg(**kw):
    base = dict(data=DataConfig(n_scenes=20, size=16, n_buildings=2),
                generator=GeneratorConfig(base_width=4, n_resblocks=1, size=16),
                discriminator=DiscriminatorConfig(base_width=4),
                tin=TinConfig(base_width=2), regressor=TinConfig(base_width=2, in_channels=4),
                steps=10, tin_steps=10, batch_size=2, sr=0.05)
    base.update(kw)
    return TrainConfig(**base)


# ------------------------------------------------------------------ 1

def test_criterion_1_rdm_matches_brute_force(capsys):
    worst, elapsed = 0.0, 0.0
    for lam in (1.0, 2.0):
        p = RdmParams(lam=lam)
        for seed in range(100):
            sc = random_scene(seed)
            want, _ = naive_rdm(sc.buildings.values, sc.transmitters, lam)
            t = time.perf_counter()
            got = radio_depth_map(sc, p).values
            elapsed += time.perf_counter() - t
            worst = max(worst, float(np.max(np.abs(got - want))))
    report(capsys, 1, worst <= 1e-12 and elapsed < 5.0,
           f"max |RDM - brute force| = {worst:.2e} over 200 maps in {elapsed:.2f}s")


# ------------------------------------------------------------------ 2

def test_criterion_2_rdm_invariants(capsys):
    rng = np.random.default_rng(2)
    bad = []
    for trial in range(100):
        lam = (1.0, 2.0)[trial % 2]
        v = radio_depth_map(random_scene(1000 + trial, n=12), RdmParams(lam=lam)).values
        if not (v.min() >= 0.0 and v.max() == 1.0):
            bad.append(("range", trial))

        n = 16
        tx = tuple(int(c) for c in rng.integers(0, n, 2))
        v = radio_depth_map(scene_from(np.zeros((n, n)), [tx]), RdmParams(lam=lam)).values
        step = [(1, 0), (0, 1), (1, 1), (-1, 0), (0, -1), (-1, -1), (1, -1), (-1, 1), (2, 1), (1, -2)][trial % 10]
        ray, (x, y) = [], tx
        while 0 <= x < n and 0 <= y < n:
            ray.append(v[y, x])
            x, y = x + step[0], y + step[1]
        if any(a < b for a, b in zip(ray, ray[1:])):
            bad.append(("radial", trial))

        sc = random_scene(2000 + trial, n=12)
        wx, wy = (int(c) for c in rng.integers(0, 12, 2))
        if (wx, wy) not in sc.transmitters:
            m = sc.buildings.values.astype(np.uint8)
            m[wy, wx] = 1
            p = RdmParams(lam=lam)
            if np.any(depth_sum(scene_from(m, sc.transmitters), p) > depth_sum(sc, p)):
                bad.append(("occlusion", trial))
    report(capsys, 2, not bad, f"range, radial and occlusion properties, 100 trials each; violations {bad[:5]}")


# ------------------------------------------------------------------ 3

def test_criterion_3_los_supercover(capsys):
    rng = np.random.default_rng(3)
    missing = 0
    for _ in range(1000):
        a, b = (tuple(int(c) for c in rng.integers(0, 32, 2)) for _ in range(2))
        got = set(map(tuple, los_pixels(a, b, 32, 32)))
        missing += len(supersample_cells(a, b) - got)
    report(capsys, 3, missing == 0, f"supersampled cells absent from los_pixels on 1000 segments: {missing}")


# ------------------------------------------------------------------ 4

def _op_check(op, arrays, rng):
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*ts)
    r = rng.normal(size=out.shape)
    ad.sum_all(ad.mul(out, Tensor(r))).backward()

    def f():
        return float(np.sum(op(*[Tensor(a) for a in arrays]).data * r))

    return max(rel_err(t.grad, finite_difference(f, a)) for t, a in zip(ts, arrays))


def _module_check(module, x, rng, per_param=6):
    xt = Tensor(x, requires_grad=True)
    out = module(xt)
    r = rng.normal(size=out.shape)
    ad.sum_all(ad.mul(out, Tensor(r))).backward()

    def f():
        return float(np.sum(module(Tensor(x)).data * r))

    worst = rel_err(xt.grad, finite_difference(f, x))
    for p in module.parameters():
        idx = rng.choice(p.data.size, size=min(per_param, p.data.size), replace=False)
        num = finite_difference(f, p.data, idx=idx)
        worst = max(worst, rel_err(p.grad.reshape(-1)[idx], num.reshape(-1)[idx]))
    return worst


def _nonzero(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 0.05, x + 0.1 * np.sign(x + 1e-12), x)


def test_criterion_4_autodiff_gradients(capsys):
    t0 = time.perf_counter()
    ops = {
        "relu": (ad.relu, lambda r: [_nonzero(r, (2, 3, 4, 4))]),
        "leaky_relu": (ad.leaky_relu, lambda r: [_nonzero(r, (2, 3, 4, 4))]),
        "sigmoid": (ad.sigmoid, lambda r: [r.normal(size=(2, 3, 4, 4))]),
        "tanh": (ad.tanh, lambda r: [r.normal(size=(2, 3, 4, 4))]),
        "max_pool2d": (ad.max_pool2d, lambda r: [r.normal(size=(2, 3, 4, 4))]),
        "add": (ad.add, lambda r: [r.normal(size=(2, 3, 4, 4)), r.normal(size=(1, 3, 1, 4))]),
        "mul": (ad.mul, lambda r: [r.normal(size=(2, 3, 4, 4)), r.normal(size=(1, 3, 1, 4))]),
        "concat": (lambda a, b: ad.concat([a, b]), lambda r: [r.normal(size=(2, 2, 3, 3)), r.normal(size=(2, 1, 3, 3))]),
        "conv2d": (lambda x, w, b: ad.conv2d(x, w, b, 2, 1),
                   lambda r: [r.normal(size=(2, 3, 8, 8)), r.normal(size=(4, 3, 4, 4)), r.normal(size=4)]),
        "conv_transpose2d": (lambda x, w, b: ad.conv_transpose2d(x, w, b, 2, 1),
                             lambda r: [r.normal(size=(2, 3, 4, 4)), r.normal(size=(3, 2, 4, 4)), r.normal(size=2)]),
        "mse_loss": (ad.mse_loss, lambda r: [r.normal(size=(2, 1, 4, 4)), r.normal(size=(2, 1, 4, 4))]),
        "bce_loss": (ad.bce_loss, lambda r: [r.uniform(0.05, 0.95, (2, 1, 4, 4)), r.uniform(size=(2, 1, 4, 4))]),
    }
    worst = {}
    for name, (op, make) in ops.items():
        for seed in range(10):
            rng = np.random.default_rng(seed)
            worst[name] = max(worst.get(name, 0.0), _op_check(op, make(rng), rng))
    rng = np.random.default_rng(40)
    worst["discriminator"] = _module_check(Discriminator(DiscriminatorConfig(base_width=4), seed=3),
                                           rng.random((1, 3, 16, 16)), rng)
    rng = np.random.default_rng(41)
    worst["tin"] = _module_check(UNet(TinConfig(base_width=4), seed=4), np.random.default_rng(4).random((1, 1, 16, 16)), rng)
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    report(capsys, 4, max(worst.values()) < 1e-4 and elapsed < 60.0,
           f"{len(worst)} gradient checks, worst rel err {worst[top]:.1e} ({top}), {elapsed:.1f}s")


# ------------------------------------------------------------------ 5

def test_criterion_5_loss_composition(capsys):
    cfg = tiny_cfg()
    assert (cfg.alpha, cfg.beta) == (1.0, 0.1)
    ds = tr.dataset_from_config(cfg)
    tin = tr.pretrain_tin(ds, cfg)
    _, rep = tr.train_tiregan(ds, tin, cfg)
    gap = max(abs(L - (lg + 1.0 * lm + 0.1 * lr)) for _, lg, lm, lr, _, L in rep.records)
    cfg0 = tiny_cfg(beta=0.0)
    g1, r1 = tr.train_tiregan(ds, tin, cfg0)
    g2, r2 = tr.train_tiregan(ds, None, cfg0)
    same = ad.checksum(g1.state_dict()) == ad.checksum(g2.state_dict()) and all(
        r1.column(c).tobytes() == r2.column(c).tobytes() for c in ("L_G", "L_MSE", "L_D", "L"))
    report(capsys, 5, gap <= 1e-12 and same,
           f"max |L - (L_G + L_MSE + 0.1 L_R)| = {gap:.1e} over {len(rep.records)} steps; beta=0 identical: {same}")


# ------------------------------------------------------------------ 6

def test_criterion_6_interpolators(capsys):
    worst = dict(idw_exact=0.0, krig_exact=0.0, wsum=0.0, idw_oracle=0.0, krig_oracle=0.0)
    model = VariogramModel(0.0, 0.05, 6.0)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(256, size=10, replace=False))
        s = SampleSet(flat % 16, flat // 16, rng.random(10), 16, 16)
        g = idw_interpolate(s).values
        worst["idw_exact"] = max(worst["idw_exact"], float(np.max(np.abs(g[s.ys, s.xs] - s.values))))
        worst["idw_oracle"] = max(worst["idw_oracle"],
                                  float(np.max(np.abs(g - naive_idw(s.xs, s.ys, s.values, 16, 16, 2.0)))))
        res = kriging_solve(s, model)
        k = res.grid.values
        worst["krig_exact"] = max(worst["krig_exact"], float(np.max(np.abs(k[s.ys, s.xs] - s.values))))
        worst["wsum"] = max(worst["wsum"], float(np.max(np.abs(res.weights.sum(axis=1) - 1.0))))
        want, _ = naive_kriging(s.xs, s.ys, s.values, 16, 16, model)
        worst["krig_oracle"] = max(worst["krig_oracle"], float(np.max(np.abs(k - want))))
    ok = (worst["idw_exact"] == 0.0 and worst["krig_exact"] <= 1e-8 and worst["wsum"] <= 1e-10
          and worst["idw_oracle"] <= 1e-8 and worst["krig_oracle"] <= 1e-8)
    report(capsys, 6, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# ------------------------------------------------------------------ 7

def test_criterion_7_metric_oracles(capsys):
    dm = dn = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = rng.random((8, 8))
        y[rng.random((8, 8)) < 0.2] = 0.0
        yhat = rng.random((8, 8))
        dm = max(dm, abs(mse(y, yhat) - naive_mse(y, yhat)))
        ref = naive_nmse(y, yhat, 1 / 255)
        dn = max(dn, abs(nmse(y, yhat) - ref) / ref)
    perfect = nmse(y, y)
    report(capsys, 7, dm <= 1e-15 and dn <= 1e-12 and perfect == 0.0,
           f"mse gap {dm:.1e}, nmse rel gap {dn:.1e}, perfect nmse {perfect}")


# ------------------------------------------------------------------ 8

@pytest.fixture(scope="module")
def smoke_dataset():
    return tr.dataset_from_config(TrainConfig())


@pytest.mark.slow
def test_criterion_8_smoke_training(capsys, smoke_dataset):
    t0 = time.perf_counter()
    ds = smoke_dataset
    drops, tin_ratios = [], []
    for seed in SMOKE_SEEDS:
        cfg = TrainConfig(seed=seed, log_every=100)
        assert (cfg.data.size, cfg.data.n_scenes, cfg.sr, cfg.steps) == (32, 200, 0.01, 2000)
        tin_rep = tr.TrainReport()
        tin = tr.pretrain_tin(ds, cfg, tin_rep)
        tin_ratios.append(tin_rep.final_test_mse / tin_rep.initial_test_mse)
        _, rep = tr.train_tiregan(ds, tin, cfg)
        drops.append(1.0 - rep.final_test_mse / rep.initial_test_mse)
    with_md, without_md = [], []
    for seed in ABLATION_SEEDS:
        for use, out in ((True, with_md), (False, without_md)):
            _, rep = tr.train_unet_regressor(ds, TrainConfig(seed=seed, use_rdm=use, log_every=100))
            out.append(rep.final_test_mse)
    minutes = (time.perf_counter() - t0) / 60
    a = float(np.median(drops)) >= 0.70
    b = float(np.median(with_md)) <= float(np.median(without_md))
    c = float(np.median(tin_ratios)) <= 0.5
    with capsys.disabled():
        print(f"\n    8a GAN test-MSE drop per seed {np.round(drops, 3).tolist()}")
        print(f"    8b regressor test MSE with depth map {np.round(with_md, 5).tolist()}, "
              f"without {np.round(without_md, 5).tolist()}")
        print(f"    8c TIN final/initial loss {np.round(tin_ratios, 3).tolist()}; total {minutes:.1f} min")
    report(capsys, 8, a and b and c,
           f"(a) median drop {np.median(drops):.1%} ; (b) median {np.median(with_md):.5f} vs "
           f"{np.median(without_md):.5f} ; (c) median TIN ratio {np.median(tin_ratios):.3f}")


# ------------------------------------------------------------------ 9

def test_criterion_9_protocol_fidelity(capsys):
    items = make_synthetic_dataset(50, size=32, n_buildings=5, seed=9, fractions=(0.0, 0.0, 1.0)).split("test")
    clean = evaluate_estimator(IdwEstimator(), items, 0.01, seed=1)
    inf_row = sweep_noise(IdwEstimator(), [None], items, sr=0.01, seed=1)[0]
    exact = inf_row.to_csv() == clean.to_csv()
    lo = evaluate_estimator(IdwEstimator(), items, 0.005, seed=1).median_mse
    hi = evaluate_estimator(IdwEstimator(), items, 0.10, seed=1).median_mse
    report(capsys, 9, exact and hi <= lo,
           f"SNR=inf equals noiseless: {exact}; median IDW MSE sr 0.5% {lo:.5f} -> 10% {hi:.5f}")


# ------------------------------------------------------------------ 10

def test_criterion_10_determinism(capsys, tmp_path):
    from tire_rme import cli

    d = tiny_cfg(out_dir="run").to_dict()
    d["eval"]["estimators"] = ["idw", "tiregan", "unet"]
    outputs = []
    for k in range(2):
        root = tmp_path / f"r{k}"
        root.mkdir()
        cfg = config_from_dict(d, base_dir=root)
        tr.run_pretrain_tin(cfg)
        tr.run_train(cfg)
        tr.run_train_baseline(cfg)
        (root / "cfg.json").write_text(__import__("json").dumps(d))
        assert cli.main(["eval", "--config", str(root / "cfg.json"), "--out", str(root / "eval.csv")]) == 0
        assert cli.main(["sweep-snr", "--config", str(root / "cfg.json"), "--out", str(root / "snr.csv")]) == 0
        outputs.append({p.relative_to(root).as_posix(): p.read_bytes()
                        for p in sorted(root.rglob("*")) if p.is_file() and p.name != "cfg.json"})
    a, b = outputs
    differing = sorted(k for k in a if a[k] != b.get(k))
    report(capsys, 10, set(a) == set(b) and not differing and len(a) >= 8,
           f"{len(a)} artifacts compared byte for byte; differing {differing}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
