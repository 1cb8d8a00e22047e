"""Command-line surface wiring the simulation/reconstruction pipeline.

Artifacts written under ``--out`` are deterministic functions of
(config, seed); wall-clock timings go to the console log only. Exit codes:
0 success, 2 configuration/usage error, 3 numerical abort.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import arrayio, labels, pipeline, ranknet
from .config import RunConfig, load_config
from .errors import ConfigError, LospError, NumericalError
from .hankel import HankelSpec
from .metrics import normalized_psnr
from .solver import FixedRank

log = logging.getLogger("losp")

_COMMANDS = ("phantom", "synth", "train", "recon", "ablate", "sweep-rank",
             "adc", "sv-curve", "eval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="losp",
        description="Multi-shot DWI reconstruction with 1D low-rank Hankel "
                    "ADMM and learned rank selection.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to the JSON run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for line-parallel stages")

    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "phantom": "emit the phantom magnitude and region-label mask",
        "synth": "synthesize the labeled line dataset(s)",
        "train": "train the rank network on a synthesized dataset",
        "recon": "simulate an acquisition and reconstruct it",
        "ablate": "compare the RO&PE / RO / PE solver variants",
        "sweep-rank": "reconstruct at every fixed rank, report the best",
        "adc": "multi-b-value pipeline with per-pixel ADC fitting",
        "sv-curve": "export one line's singular value attenuation curve",
        "eval": "PSNR table of reconstruction arrays against a reference",
    }
    for name in _COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "sv-curve":
            sp.add_argument("--direction", choices=("ro", "pe"), default="ro")
            sp.add_argument("--position", type=int, default=None,
                            help="line index (default: center line)")
        if name == "eval":
            sp.add_argument("reference", nargs="?",
                            help="reference image (LOSPARR1)")
            sp.add_argument("recons", nargs="*",
                            help="reconstruction images (LOSPARR1)")
    return parser


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_solver_log(path, logs) -> None:
    arrayio.write_csv(path,
                      ["iteration", "objective", "primal_residual", "data_residual"],
                      zip(logs.iteration, logs.objective, logs.primal_residual,
                          logs.data_residual))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_phantom(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    phantom = pipeline.phantom_for(cfg)
    arrayio.save_array(phantom.magnitude, out / "phantom_magnitude.losparr")
    arrayio.write_label_pgm(phantom.label_image(), out / "phantom_labels.pgm")
    log.info("phantom: %d regions, coverage %.1f%%", len(phantom.regions),
             100.0 * phantom.label_image().astype(bool).mean())
    return 0


def _cmd_synth(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    for j in cfg.train.j_values:
        ds = labels.synthesize_dataset(_dataset_config(cfg, int(j)), threads=args.threads)
        path = out / f"dataset_j{int(j)}.lospds"
        labels.save_dataset(ds, path)
        log.info("synth: wrote %d samples to %s", len(ds.samples), path)
    return 0


def _dataset_config(cfg: RunConfig, j: int) -> labels.DatasetConfig:
    t, p, ph = cfg.train, cfg.phantom, cfg.phase
    return labels.DatasetConfig(
        size_ro=p.size_ro, size_pe=p.size_pe, n_regions=p.n_regions,
        n_shots=j, order_range=tuple(t.order_range), coeff_scale=ph.coeff_scale,
        order_overrides=ph.order_overrides, window=cfg.solver.window,
        n_images=t.n_images, snr_range=tuple(t.snr_range), seed=cfg.seed)


def _cmd_train(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    t = cfg.train
    for j in cfg.train.j_values:
        ds_path = out / f"dataset_j{int(j)}.lospds"
        if not ds_path.exists():
            ds = labels.synthesize_dataset(_dataset_config(cfg, int(j)),
                                           threads=args.threads)
            labels.save_dataset(ds, ds_path)
            log.info("train: synthesized missing dataset %s", ds_path)
        dataset = labels.load_dataset(ds_path)
        tconf = ranknet.TrainConfig(
            epochs=t.epochs, lr=t.lr, decay_factor=t.decay_factor,
            decay_every=t.decay_every, batch_size=t.batch_size, split=t.split,
            seed=cfg.seed, channels=t.channels, blocks=t.blocks, kernel=t.kernel)
        weights, history = ranknet.train(dataset, tconf)
        ranknet.save_weights(weights, out / f"ranknet_j{int(j)}.lospnn")
        arrayio.write_csv(out / f"train_history_j{int(j)}.csv",
                          ["epoch", "train_loss", "val_loss"],
                          zip(history.epochs, history.train_loss, history.val_loss))
        log.info("train: J=%d final train loss %.4f, val loss %.4f", j,
                 history.train_loss[-1], history.val_loss[-1])
    return 0


def _cmd_recon(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    inst = pipeline.build_instance(cfg)
    policy = pipeline.make_policy(cfg, inst)
    result = pipeline.run_recon(cfg, inst, policy, threads=args.threads)

    arrayio.save_array(inst.gt_image, out / "gt_image.losparr")
    arrayio.save_array(inst.y.data, out / "acquired_kspace.losparr")
    arrayio.save_array(result.image, out / "recon_image.losparr")
    arrayio.save_array(result.x_hat, out / "recon_kspace.losparr")
    arrayio.export_image(result.image, out / "recon_image.pgm")
    with open(out / "sampling.json", "w") as fh:
        json.dump(inst.sampling.to_dict(), fh, indent=2, sort_keys=True)
    with open(out / "phase_spec.json", "w") as fh:
        fh.write(inst.phase_spec.to_json())
    _write_solver_log(out / "solver_log.csv", result.logs)
    arrayio.write_csv(out / "psnr.csv", ["method", "psnr_db"],
                      [("zero-filled", result.psnr_zero_filled),
                       (cfg.solver.rank_policy.kind, result.psnr)])
    log.info("recon: PSNR %.2f dB (zero-filled %.2f dB), %.2f s/iter mean",
             result.psnr, result.psnr_zero_filled,
             float(np.mean(result.logs.wall_time)))
    return 0


def _cmd_sweep_rank(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    inst = pipeline.build_instance(cfg)
    sweep = pipeline.sweep_fixed_ranks(cfg, inst, threads=args.threads)
    best_r, best_psnr = pipeline.best_fixed_rank(sweep)
    arrayio.write_csv(out / "rank_sweep.csv", ["rank", "psnr_db"], sweep)
    arrayio.write_csv(out / "best_fixed.csv", ["rank", "psnr_db"],
                      [(best_r, best_psnr)])
    best = pipeline.run_recon(cfg, inst, FixedRank(best_r), threads=args.threads)
    arrayio.save_array(best.image, out / "best_fixed_image.losparr")
    log.info("sweep-rank: best fixed rank %d at %.2f dB", best_r, best_psnr)
    return 0


def _cmd_ablate(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    inst = pipeline.build_instance(cfg)
    policy = pipeline.make_policy(cfg, inst)
    table = pipeline.ablate_variants(cfg, inst, policy, threads=args.threads)
    arrayio.write_csv(out / "ablation.csv", ["variant", "psnr_db"],
                      [(k, v) for k, v in table.items()])
    log.info("ablate: %s", ", ".join(f"{k} {v:.2f} dB" for k, v in table.items()))
    return 0


def _cmd_adc(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    weights = None
    if cfg.solver.rank_policy.kind == "learned":
        weights = ranknet.load_weights(cfg.solver.rank_policy.weights)
    result = pipeline.run_adc(cfg, threads=args.threads, weights=weights)
    arrayio.save_array(result.adc_map, out / "adc_map.losparr")
    rows = []
    for rid in sorted(result.true_map):
        true, fitted = result.true_map[rid], result.region_means[rid]
        rel = abs(fitted - true) / true
        rows.append((rid, true, fitted, rel))
    arrayio.write_csv(out / "adc_summary.csv",
                      ["region", "true_adc", "mean_fitted_adc", "rel_err"], rows)
    log.info("adc: region 1 fitted %.3e vs true %.3e",
             result.region_means[1], result.true_map[1])
    return 0


def _cmd_sv_curve(args) -> int:
    cfg = _require_config(args)
    out = _outdir(args)
    inst = pipeline.build_instance(cfg)
    stack = labels.lines_from_kspace(inst.x_gt, args.direction)
    position = args.position
    if position is None:
        position = stack.shape[0] // 2
    if not 0 <= position < stack.shape[0]:
        raise ConfigError(f"line position {position} outside [0, {stack.shape[0]})")
    spec = HankelSpec(cfg.solver.window, stack.shape[2], stack.shape[1])
    path = out / f"sv_curve_{args.direction}_{position}.csv"
    arrayio.export_sv_curve(stack[position], spec, path)
    log.info("sv-curve: wrote %s", path)
    return 0


def _cmd_eval(args) -> int:
    if not args.reference or not args.recons:
        raise ConfigError("'eval' needs a reference file and at least one recon file")
    out = _outdir(args)
    reference = arrayio.load_real_array(args.reference)
    rows = []
    for path in args.recons:
        recon = arrayio.load_real_array(path)
        rows.append((Path(path).name, normalized_psnr(recon, reference)))
    arrayio.write_csv(out / "psnr_table.csv", ["file", "psnr_db"], rows)
    for name, value in rows:
        log.info("eval: %s %.2f dB", name, value)
    return 0


_DISPATCH = {
    "phantom": _cmd_phantom,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "recon": _cmd_recon,
    "ablate": _cmd_ablate,
    "sweep-rank": _cmd_sweep_rank,
    "adc": _cmd_adc,
    "sv-curve": _cmd_sv_curve,
    "eval": _cmd_eval,
}


def cli(argv=None) -> int:
    """Parse and run; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return _DISPATCH[args.command](args)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LospError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli())
