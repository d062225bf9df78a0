"""Command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical abort.
"""

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericalAbort, RmeError

log = logging.getLogger("tire_rme")


def _cmd_gen_data(a):
    from .dataset import make_synthetic_dataset, write_dataset
    from .scene import SimParams

    sim = SimParams(a.ref_db, a.gamma, a.wall_loss, a.shadow_sigma, a.floor_db)
    ds = make_synthetic_dataset(a.n_scenes, a.size, a.buildings, a.tx, a.seed, sim)
    path = write_dataset(ds, a.out, a.format)
    print(f"wrote {len(ds)} scenes and {path}")


def _cmd_rdm(a):
    from .dataset import save_raster
    from .rdm import RdmParams, radio_depth_map
    from .scene import load_scene

    g = radio_depth_map(load_scene(a.scene), RdmParams(a.lam, a.min_distance))
    save_raster(g, a.out)


def _cmd_sample(a):
    from .dataset import PreprocessParams, load_raster, sample_uniform, write_samples_csv

    snr = None if a.snr is None or a.snr.lower() in ("none", "inf") else float(a.snr)
    s = sample_uniform(load_raster(a.map), PreprocessParams(a.threshold, a.sr, snr, a.seed))
    write_samples_csv(s, a.out)


def _items(cfg):
    from .train import dataset_from_config

    ds = dataset_from_config(cfg)
    items = ds.split(cfg.eval.split)
    if cfg.eval.max_maps:
        items = items[:cfg.eval.max_maps]
    if not items:
        raise ConfigError(f"split {cfg.eval.split!r} is empty")
    return items


def _cmd_estimate(a, cfg):
    from .dataset import save_raster
    from .evaluate import _map_samples, make_estimator

    est = make_estimator(a.method, cfg)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, it in enumerate(_items(cfg)):
        s = _map_samples(it, i, cfg.eval.sr, cfg.eval.seed, cfg.low_threshold, None)
        save_raster(est(it, s), out / f"{i:05d}_{a.method}.png")


def _fmt(v):
    return "n/a" if v is None else f"{v:.6g}"


def _cmd_pretrain_tin(a, cfg):
    from .train import run_pretrain_tin

    rep = run_pretrain_tin(cfg)
    print(f"TIN loss {_fmt(rep.initial_test_mse)} -> {_fmt(rep.final_test_mse)}; checkpoint {rep.checkpoint}")


def _cmd_train(a, cfg):
    from .train import run_train

    rep = run_train(cfg)
    print(f"test MSE {_fmt(rep.initial_test_mse)} -> {_fmt(rep.final_test_mse)}; checkpoint {rep.checkpoint}")


def _cmd_train_baseline(a, cfg):
    from .train import run_train_baseline

    rep = run_train_baseline(cfg)
    print(f"test MSE {_fmt(rep.initial_test_mse)} -> {_fmt(rep.final_test_mse)}; checkpoint {rep.checkpoint}")


def _eval_kw(cfg, a):
    return dict(low_threshold=cfg.low_threshold, nmse_eps=cfg.eval.nmse_eps,
                mask_buildings=cfg.eval.mask_buildings or a.mask_buildings)


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_eval(a, cfg):
    from .evaluate import evaluate_estimator, make_estimator

    items = _items(cfg)
    texts = []
    for k, name in enumerate(cfg.eval.estimators):
        rep = evaluate_estimator(make_estimator(name, cfg), items, cfg.eval.sr, cfg.eval.seed, **_eval_kw(cfg, a))
        t = rep.to_csv()
        texts.append(t if k == 0 else t.split("\n", 1)[1])
    _write("".join(texts), a.out)


def _cmd_sweep_sr(a, cfg):
    from .evaluate import make_estimator, render_table, sweep_sampling, sweep_table

    ests = [make_estimator(n, cfg) for n in cfg.eval.estimators]
    reps = sweep_sampling(ests, cfg.eval.sr_list, _items(cfg), cfg.eval.seed, **_eval_kw(cfg, a))
    _write(sweep_table(reps), a.out)
    log.info("\n%s", render_table(reps))


def _cmd_sweep_snr(a, cfg):
    from .evaluate import make_estimator, render_table, sweep_noise, sweep_table

    if not cfg.eval.estimators:
        raise ConfigError("eval.estimators is empty")
    items = _items(cfg)
    reps = []
    for name in cfg.eval.estimators:
        reps += sweep_noise(make_estimator(name, cfg), cfg.eval.snr_list, items, cfg.eval.sr,
                            cfg.eval.seed, **_eval_kw(cfg, a))
    _write(sweep_table(reps), a.out)
    log.info("\n%s", render_table(reps))


def _cmd_eval_outage(a, cfg):
    import csv
    import io

    from .evaluate import evaluate_outage, make_estimator
    from .train import _tin_path, load_tin

    p = _tin_path(cfg)
    if not Path(p).exists():
        raise ConfigError(f"missing task-network checkpoint {p}; run pretrain-tin first")
    tin = load_tin(p, cfg)
    items = _items(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "sr", "threshold", "outage_mse", "n_maps"])
    for name in cfg.eval.estimators:
        m, vals = evaluate_outage(make_estimator(name, cfg), tin, items, cfg.outage_threshold,
                                  cfg.eval.sr, cfg.eval.seed, cfg.low_threshold)
        w.writerow([name, repr(cfg.eval.sr), repr(cfg.outage_threshold), repr(m), len(vals)])
    _write(buf.getvalue(), a.out)


CONFIG_COMMANDS = {
    "estimate": _cmd_estimate,
    "pretrain-tin": _cmd_pretrain_tin,
    "train": _cmd_train,
    "train-baseline": _cmd_train_baseline,
    "eval": _cmd_eval,
    "sweep-sr": _cmd_sweep_sr,
    "sweep-snr": _cmd_sweep_snr,
    "eval-outage": _cmd_eval_outage,
}


def build_parser():
    p = argparse.ArgumentParser(prog="tire-rme", description="Radiomap estimation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic scenes, radiomaps and a manifest")
    g.add_argument("--n-scenes", type=int, default=200)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--buildings", type=int, default=5)
    g.add_argument("--tx", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("png", "pgm"), default="png")
    g.add_argument("--gamma", type=float, default=3.0, help="path-loss exponent")
    g.add_argument("--wall-loss", type=float, default=6.0, help="dB per building pixel crossed")
    g.add_argument("--shadow-sigma", type=float, default=0.0)
    g.add_argument("--ref-db", type=float, default=0.0)
    g.add_argument("--floor-db", type=float, default=-60.0)
    g.set_defaults(func=_cmd_gen_data)

    r = sub.add_parser("rdm", help="render the radio depth map of a scene")
    r.add_argument("--scene", required=True)
    r.add_argument("--lambda", dest="lam", type=float, default=2.0)
    r.add_argument("--min-distance", type=float, default=1.0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_rdm)

    s = sub.add_parser("sample", help="draw sparse samples from a radiomap raster")
    s.add_argument("--map", required=True)
    s.add_argument("--sr", type=float, default=0.01)
    s.add_argument("--threshold", type=float, default=0.0)
    s.add_argument("--snr", default=None, help="dB, or 'none'")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sample)

    for name in CONFIG_COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True)
        if name == "estimate":
            c.add_argument("--method", choices=("idw", "kriging", "unet", "tiregan"), required=True)
            c.add_argument("--out", required=True)
        if name in ("eval", "sweep-sr", "sweep-snr", "eval-outage"):
            c.add_argument("--out", default=None)
            c.add_argument("--mask-buildings", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(message)s")
    try:
        if a.command in CONFIG_COMMANDS:
            from .config import load_config

            CONFIG_COMMANDS[a.command](a, load_config(a.config))
        else:
            a.func(a)
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except RmeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
