"""
Command-line entry point.

    inffusion simulate  --synthetic 128 --out data/          simulate LR-HSI/HR-MSI/GT triples
    inffusion train     --data data/ --out model/            train and write model.ckpt + loss.csv
    inffusion eval      --data data/ --checkpoint model/model.ckpt --out eval/
    inffusion ablate    --data data/ --axis all --out ablations/
    inffusion runs                                           recent runs from the ledger

Exit codes: 0 success, 1 usage, 2 I/O, 3 validation.
"""
import os
import sys
from typing import Dict, List, Optional, Sequence

import click
import numpy as np
import orjson
import pandas as pd

from inffusion.config import settings
from inffusion.core.checkpoint import load_checkpoint, save_checkpoint
from inffusion.core.cube import HsiCube
from inffusion.errors import (
    ArchitectureMismatchError,
    DivisibilityError,
    ExitCode,
    InfFusionError,
    UsageError,
)
from inffusion.integrations.cube_io import load_cube, load_srf_table, save_cube, save_pgm
from inffusion.services import ablation_service, evaluation_service, simulation_service, training_service
from inffusion.services.config_service import load_train_config
from inffusion.services.run_service import RunTracker, recent_runs
from inffusion.utils.logging import log_error_with_context, setup_logging


def _argv(ctx: click.Context) -> List[str]:
    return list((ctx.obj or {}).get("argv", []))


def _parse_position(value: Optional[str]):
    if value is None:
        return None
    try:
        row, col = (int(v) for v in value.split(","))
    except ValueError:
        raise UsageError(f"--profile expects ROW,COL, got {value!r}", value=value)
    return row, col


@click.group(name="inffusion")
@click.option("--log-level", default=None, help="Override LOG_LEVEL")
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_NAME)
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str]):
    """Hyperspectral / multispectral fusion with implicit neural feature fusion."""
    ctx.ensure_object(dict)
    setup_logging(
        level=log_level or ("DEBUG" if settings.DEBUG else settings.LOG_LEVEL),
        log_file=settings.LOG_FILE,
        colored=settings.LOG_COLORED,
    )


@cli.command()
@click.option("--input", "inputs", multiple=True, type=click.Path(), help="Ground-truth cube file(s)")
@click.option("--synthetic", type=int, default=None, help="Generate an N x N synthetic scene instead")
@click.option("--bands", type=int, default=31, show_default=True, help="Bands of the synthetic scene")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--scale", type=int, default=4, show_default=True)
@click.option("--patch", type=int, default=64, show_default=True)
@click.option("--stride", type=int, default=None, help="Patch stride (default: patch size)")
@click.option("--srf", type=click.Path(), default=None, help="SRF table (default: synthetic RGB triangles)")
@click.option("--seed", type=int, default=None)
@click.option("--downsample", type=click.Choice(simulation_service.DOWNSAMPLE_MODES), default="decimate",
              show_default=True)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.pass_context
def simulate(ctx, inputs, synthetic, bands, out_dir, scale, patch, stride, srf, seed, downsample, train_fraction):
    """Cut ground truth into patches and simulate (LR-HSI, HR-MSI) for each."""
    if not inputs and synthetic is None:
        raise UsageError("give --input cube(s) or --synthetic N")
    seed = settings.DEFAULT_SEED if seed is None else seed
    config = {"scale": scale, "patch": patch, "stride": stride or patch, "srf": srf, "synthetic": synthetic,
              "bands": bands if synthetic else None, "downsample": downsample, "train_fraction": train_fraction}
    with RunTracker("simulate", out_dir, _argv(ctx), config, seed, list(inputs) + ([srf] if srf else [])) as run:
        gts: List[HsiCube] = [load_cube(p) for p in inputs]
        if synthetic is not None:
            gts.append(simulation_service.make_synthetic_scene(synthetic, synthetic, bands, seed))
        for k, gt in enumerate(gts):
            if gt.height % scale or gt.width % scale:
                raise DivisibilityError(f"cube {k} is {gt.height}x{gt.width}, not divisible by scale {scale}",
                                        axis="H" if gt.height % scale else "W", r=scale)
        if patch % scale:
            raise DivisibilityError(f"patch {patch} is not divisible by scale {scale}", axis="patch", r=scale)
        response = load_srf_table(srf) if srf else None
        index = simulation_service.simulate_dataset(
            gts, out_dir, response, scale, patch, stride, seed, downsample, train_fraction, run.run_id,
        )
        run.add_outputs(index.pop("outputs"))
        run.set_extra(samples=len(index["samples"]), split=index["split"])
        click.echo(f"{len(index['samples'])} sample(s) written to {out_dir}")


def _train_overrides(seed, epochs, lr, max_steps, checkpoint_every, scale) -> Dict[str, Dict]:
    return {
        "train": {"seed": seed, "epochs": epochs, "lr": lr, "max_steps": max_steps,
                  "checkpoint_every": checkpoint_every},
        "fusion": {"r": scale},
    }


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML experiment file")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--checkpoint-every", type=int, default=None)
@click.option("--strict", is_flag=True, help="Reject flags that contradict the config file")
@click.pass_context
def train(ctx, data_dir, config_path, out_dir, seed, epochs, lr, max_steps, checkpoint_every, strict):
    """Train the network on the train split of a simulated dataset."""
    with RunTracker("train", out_dir, _argv(ctx), inputs=[config_path] if config_path else []) as run:
        index = simulation_service.read_index(data_dir)
        cfg = load_train_config(
            config_path,
            _train_overrides(seed, epochs, lr, max_steps, checkpoint_every, index["scale"]),
            strict=strict,
            defaults={"train": {"seed": settings.DEFAULT_SEED}},
        )
        run.set_config(cfg.model_dump(mode="json"), seed=cfg.seed)
        samples = simulation_service.load_dataset(data_dir, "train", fallback_all=True)
        run.set_inputs(simulation_service.dataset_files(data_dir, samples) + ([config_path] if config_path else []))
        ckpt_dir = os.path.join(out_dir, "checkpoints") if cfg.checkpoint_every else None
        result = training_service.train(samples, cfg, checkpoint_dir=ckpt_dir, run_id=run.run_id)
        model_path = save_checkpoint(result.params, os.path.join(out_dir, "model.ckpt"))
        loss_path = training_service.save_loss_csv(result.history, os.path.join(out_dir, "loss.csv"))
        run.add_outputs([model_path, loss_path] + result.checkpoints)
        run.set_config(cfg.model_dump(mode="json") | {"network": result.params.arch.model_dump(mode="json")})
        run.report = {"steps": len(result.history), "param_count": result.params.count(),
                      "final_loss": result.history[-1].loss if result.history else None}
        click.echo(f"{len(result.history)} step(s), {result.params.count()} parameters -> {model_path}")


def _write_report(report, out_dir: str, stem: str) -> List[str]:
    csv_path = report.to_csv(os.path.join(out_dir, f"{stem}.csv"))
    txt_path = os.path.join(out_dir, f"{stem}.txt")
    text = report.to_text()
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    click.echo(text)
    return [csv_path, txt_path]


@cli.command(name="eval")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", show_default=True)
@click.option("--baseline", type=click.Choice(["bicubic"]), default=None, help="Also score a plain baseline")
@click.option("--profile", default=None, help="ROW,COL of a spectral profile to dump per image")
@click.option("--pgm-band", type=int, default=None, help="Dump this band of fused and GT cubes as PGM")
@click.option("--save-fused", is_flag=True, help="Write fused cubes")
@click.option("--per-band-psnr", is_flag=True, help="Average PSNR per band instead of one joint MSE")
@click.option("--workers", type=int, default=None, help="Parallel images (default EVAL_WORKERS)")
@click.pass_context
def eval_cmd(ctx, data_dir, checkpoint, out_dir, split, baseline, profile, pgm_band, save_fused,
             per_band_psnr, workers):
    """Score a checkpoint (and/or the bicubic baseline) on a dataset split."""
    if checkpoint is None and baseline is None:
        raise UsageError("give --checkpoint, --baseline bicubic, or both")
    position = _parse_position(profile)
    config = {"split": split, "baseline": baseline, "profile": profile, "pgm_band": pgm_band,
              "per_band_psnr": per_band_psnr}
    with RunTracker("eval", out_dir, _argv(ctx), config, None, [checkpoint] if checkpoint else []) as run:
        index = simulation_service.read_index(data_dir)
        r = int(index["scale"])
        run.set_config(config | {"scale": r})
        samples = simulation_service.load_dataset(data_dir, split, fallback_all=True)
        simulation_service.check_consistent(samples)
        run.set_inputs(simulation_service.dataset_files(data_dir, samples) + ([checkpoint] if checkpoint else []))
        outputs: List[str] = []
        fused: Dict[str, np.ndarray] = {}
        reports = {}
        if checkpoint:
            params = load_checkpoint(checkpoint)
            arch = params.arch
            lr0, msi0 = samples[0].lr, samples[0].msi
            if (arch.bands, arch.msi_bands, arch.fusion.r) != (lr0.bands, msi0.bands, r):
                raise ArchitectureMismatchError(
                    "checkpoint does not fit the dataset",
                    checkpoint={"bands": arch.bands, "msi_bands": arch.msi_bands, "r": arch.fusion.r},
                    data={"bands": lr0.bands, "msi_bands": msi0.bands, "r": r},
                )
            report = evaluation_service.evaluate_model(samples, params, workers, per_band_psnr, keep=fused)
            reports["metrics"] = report
            outputs += _write_report(report, out_dir, "metrics")
        baseline_cubes: Dict[str, np.ndarray] = {}
        if baseline:
            report = evaluation_service.evaluate_bicubic(samples, r, workers, per_band_psnr, keep=baseline_cubes)
            reports["bicubic"] = report
            outputs += _write_report(report, out_dir, "bicubic_metrics")

        for s in samples:
            cubes = {"gt": s.gt.data}
            if s.name in fused:
                cubes["fused"] = fused[s.name]
            if s.name in baseline_cubes:
                cubes["bicubic"] = baseline_cubes[s.name]
            primary = cubes.get("fused", cubes.get("bicubic"))
            if save_fused and primary is not None:
                outputs.append(save_cube(HsiCube(primary, s.gt.wavelengths),
                                         os.path.join(out_dir, "fused", f"{s.name}_fused.cube")))
            if position is not None:
                frame = evaluation_service.spectral_profile(cubes, *position, wavelengths=s.gt.wavelengths)
                path = os.path.join(out_dir, f"profile_{s.name}.csv")
                frame.to_csv(path, index=False, float_format="%.8f")
                outputs.append(path)
            if pgm_band is not None:
                os.makedirs(os.path.join(out_dir, "pgm"), exist_ok=True)
                for label, data in cubes.items():
                    path = os.path.join(out_dir, "pgm", f"{s.name}_{label}_b{pgm_band}.pgm")
                    outputs.append(save_pgm(HsiCube(data), pgm_band, path))
        run.add_outputs(outputs)
        run.report = {name: rep.model_dump(mode="json") for name, rep in reports.items()}


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--axis", "axes", multiple=True, required=True,
              type=click.Choice(ablation_service.axis_names() + ["all"]))
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--max-steps", type=int, default=None, help="Cap optimizer steps per arm")
@click.option("--strict", is_flag=True)
@click.option("--workers", type=int, default=None)
@click.pass_context
def ablate(ctx, data_dir, out_dir, axes, config_path, seed, epochs, lr, max_steps, strict, workers):
    """Train and score one model per arm of each ablation axis."""
    with RunTracker("ablate", out_dir, _argv(ctx), inputs=[config_path] if config_path else []) as run:
        index = simulation_service.read_index(data_dir)
        cfg = load_train_config(
            config_path,
            _train_overrides(seed, epochs, lr, max_steps, None, index["scale"]),
            strict=strict,
            defaults={"train": {"seed": settings.DEFAULT_SEED}},
        )
        run.set_config(cfg.model_dump(mode="json") | {"axes": list(axes)}, seed=cfg.seed)
        train_samples = simulation_service.load_dataset(data_dir, "train", fallback_all=True)
        test_samples = simulation_service.load_dataset(data_dir, "test")
        inputs = simulation_service.dataset_files(data_dir, train_samples + test_samples)
        run.set_inputs(inputs + ([config_path] if config_path else []))
        tables = ablation_service.run_ablations(list(axes), cfg, train_samples, test_samples or None,
                                                workers, run.run_id)
        outputs = []
        for table in tables:
            stem = f"ablation_{table.axis}"
            outputs.append(table.to_csv(os.path.join(out_dir, f"{stem}.csv")))
            text_path = os.path.join(out_dir, f"{stem}.txt")
            with open(text_path, "w", encoding="utf-8") as fh:
                fh.write(table.to_text() + "\n")
            outputs.append(text_path)
            click.echo(table.to_text() + "\n")
        run.add_outputs(outputs)
        run.report = {t.axis: t.to_frame().to_dict(orient="records") for t in tables}


@cli.command()
@click.option("--limit", type=int, default=10, show_default=True)
def runs(limit):
    """List recent runs from the ledger."""
    rows = recent_runs(limit)
    if not rows:
        click.echo("no runs recorded")
        return
    click.echo(pd.DataFrame(rows).to_string(index=False))


def _print_error(error: InfFusionError) -> None:
    payload = orjson.dumps(error.to_response().model_dump(), default=str,
                           option=orjson.OPT_SERIALIZE_NUMPY)
    click.echo(payload.decode(), err=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        rv = cli.main(args=argv, prog_name="inffusion", obj={"argv": argv}, standalone_mode=False)
        return rv if isinstance(rv, int) else ExitCode.OK
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return ExitCode.USAGE
    except click.ClickException as e:
        e.show()
        return ExitCode.USAGE
    except InfFusionError as e:
        log_error_with_context(e, {"argv": " ".join(argv), "error_code": e.error_code})
        _print_error(e)
        return int(e.exit_code)
    except OSError as e:
        log_error_with_context(e, {"argv": " ".join(argv)})
        click.echo(orjson.dumps({"error_code": "IO_ERROR", "error_message": str(e)}).decode(), err=True)
        return ExitCode.IO


if __name__ == "__main__":
    sys.exit(main())
