"""Command-line interface: gen-data, train, eval, report, selfcheck."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .datamodel import (AttributeSchema, SyntheticSpec, default_schema,
                        generate_synthetic, load_dataset, load_schema,
                        save_dataset, save_schema)
from .errors import FairVLError
from .metrics import FairnessReport
from .reporting import (load_train_log, plot_loss_curves, report_table,
                        write_report_files)
from .runner import (FairModel, RunConfig, evaluate_zero_shot, linear_probe,
                     split_train_val, train)



@click.group()
def main():
    """Fair multimodal pretraining sandbox."""


def _fail(err: Exception):
    click.echo(f"error: {err}", err=True)
    sys.exit(1)


@main.command("gen-data")
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON file with generator settings and optional schema.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--schema-out", type=click.Path(), default=None,
              help="Also write the schema JSON next to the dataset.")
@click.option("--n-samples", type=int, default=4000, show_default=True)
@click.option("--bias-strength", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def gen_data(spec_path, out_path, schema_out, n_samples, bias_strength, seed):
    """Generate a synthetic dataset file (one JSON record per line)."""
    try:
        if spec_path:
            doc = json.loads(Path(spec_path).read_text())
            schema = (AttributeSchema.from_dict(doc["schema"]) if "schema" in doc
                      else default_schema())
            spec = SyntheticSpec.from_dict(doc["spec"] if "spec" in doc else doc)
        else:
            from .runner import default_demo_spec

            schema = default_schema()
            spec = default_demo_spec(seed)
            spec.n_samples = n_samples
            spec.bias_strength = bias_strength
        samples = generate_synthetic(spec, schema)
        save_dataset(samples, out_path, schema)
        if schema_out:
            save_schema(schema, schema_out)
        click.echo(f"wrote {len(samples)} samples to {out_path}")
    except FairVLError as e:
        _fail(e)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--demo", is_flag=True,
              help="Use the toy-scale demonstration configuration instead of "
                   "the published operating defaults.")
def train_cmd(config_path, data_path, schema_path, out_dir, seed, demo):
    """Train a model; writes checkpoint, log CSV, and loss-curve figure."""
    try:
        from .runner import default_demo_config

        if config_path:
            config = RunConfig.from_json_file(config_path)
        elif demo:
            config = default_demo_config(seed if seed is not None else 0)
        else:
            config = RunConfig()
        if seed is not None:
            config.seed = seed
        schema = load_schema(schema_path) if schema_path else default_schema()
        samples = load_dataset(data_path, schema)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _, log_rows, _ = train(config, samples, schema,
                               checkpoint_path=out / "checkpoint.json",
                               log_path=out / "train_log.csv")
        plot_loss_curves(log_rows, out / "loss_curves.png")
        click.echo(f"trained {config.epochs} epochs "
                   f"({sum(1 for r in log_rows if r['kind'] == 'step')} steps); "
                   f"artifacts in {out}")
    except FairVLError as e:
        _fail(e)


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--protocol", type=click.Choice(["zero-shot", "probe"]),
              default="zero-shot", show_default=True)
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--probe-lr", type=float, default=1e-4, show_default=True)
@click.option("--probe-epochs", type=int, default=1000, show_default=True)
@click.option("--probe-train-frac", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for the probe train/eval split.")
def eval_cmd(checkpoint, data_path, protocol, out_dir, threshold,
             probe_lr, probe_epochs, probe_train_frac, seed):
    """Evaluate a checkpoint and write JSON/CSV/figure report files."""
    try:
        model = FairModel.load(checkpoint)
        samples = load_dataset(data_path, model.schema)
        if protocol == "zero-shot":
            report = evaluate_zero_shot(model, samples, threshold=threshold)
        else:
            eval_split, train_split = split_train_val(
                samples, 1.0 - probe_train_frac, seed)
            pred = linear_probe(model, train_split, eval_split,
                                lr=probe_lr, epochs=probe_epochs,
                                threshold=threshold)
            from .metrics import build_report
            report = build_report(pred, model.schema)
        path = write_report_files(report, out_dir, stem=f"report_{protocol}")
        click.echo(report_table(report))
        click.echo(f"report written to {path}")
    except FairVLError as e:
        _fail(e)


@main.command("report")
@click.option("--log", "log_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
def report_cmd(log_path, report_path, out_dir):
    """Render tables and figures from existing logs / report JSON."""
    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if log_path:
            rows = load_train_log(log_path)
            plot_loss_curves(rows, out / "loss_curves.png")
            click.echo(f"wrote {out / 'loss_curves.png'}")
        if report_path:
            report = FairnessReport.from_json(Path(report_path).read_text())
            write_report_files(report, out, stem="report")
            click.echo(report_table(report))
        if not log_path and not report_path:
            raise click.UsageError("provide --log and/or --report")
    except FairVLError as e:
        _fail(e)


@main.command("selfcheck")
def selfcheck_cmd():
    """Run the analytic fixtures, oracle comparisons, and gradient checks."""
    from .selfcheck import run_selfcheck

    sys.exit(0 if run_selfcheck(verbose=True) else 1)


if __name__ == "__main__":
    main()
