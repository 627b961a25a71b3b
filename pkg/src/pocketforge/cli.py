"""Command-line interface: curation, training, sampling and evaluation runs

Every subcommand records a run manifest (config hash, seed, input digests,
outputs) under ``<output_dir>/manifests/`` so that ``replay`` can re-execute
it.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import torch
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, TextColumn, TimeRemainingColumn

from . import __version__
from .analysis.report import evaluate_samples, report_rows, write_report
from .config import STAGES, Config
from .data.dataset import assemble_record, load_dataset, molecule_to_2d, molecule_to_3d
from .data.db import RunLog
from .data.export import dataset_digest, file_digest, write_raw_records, write_sample, write_structure, write_tsv
from .data.homology import debias, stats_by_threshold, stratified_evaluation_split
from .data.loader import load_molecule, load_raw_record, load_raw_records, load_sample, load_structure, read_manifest
from .data.models import ProteinStructure
from .data.pocket import pocket_residue_positions
from .data.synthetic import SyntheticConfig, canonical_instance, generate_synthetic_dataset
from .data.vocab import CoEvoVocabulary
from .errors import (
    EXIT_OK,
    ConfigurationError,
    EmptyPocketError,
    InputError,
    NumericError,
    TrainingAbortedError,
    exit_code_for,
)
from .flows.engine import moving_average, train_stage
from .flows.gradcheck import gradcheck
from .flows.objectives import Stage
from .flows.sampler import sample
from .manifest import RunManifest, read_run_manifest, write_manifest_atomic
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.network import build_network
from .utils.formatting import gradcheck_table, loss_chart, loss_table, report_table, stats_table

logger = logging.getLogger(__name__)
console = Console()


class RunContext:
    """Collects the digests of inputs and the paths of outputs of one run"""

    def __init__(self, command: str, argv: Sequence[str], config: Config):
        self.command = command
        self.argv = list(argv)
        self.config = config
        self.inputs: Dict[str, str] = {}
        self.outputs: List[str] = []
        self._start = time.perf_counter()

    def read(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Input not found: {path}")
        self.inputs[str(path)] = file_digest(path)
        return path

    def read_manifest_files(self, manifest) -> Path:
        """Digest a dataset manifest and every file it lists"""
        manifest = self.read(manifest)
        for entry in read_manifest(manifest):
            for path in (entry.structure, entry.substrate, entry.product, entry.msa):
                if path is not None and path.exists():
                    self.read(path)
        return manifest

    def wrote(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def finish(self, status: str = "ok", error: Optional[str] = None) -> Path:
        manifest = RunManifest(
            command=self.command,
            argv=self.argv,
            config_hash=self.config.digest(),
            seed=self.config.seed,
            inputs=self.inputs,
            outputs=self.outputs,
            wall_clock_seconds=round(time.perf_counter() - self._start, 3),
            status=status,
            error=error,
        )
        path = Path(self.config.output_dir) / "manifests" / f"{self.command}.json"
        write_manifest_atomic(path, manifest)
        logger.info("Run manifest written to %s", path)
        return path


def setup_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"--set expects KEY=VALUE, got {pair!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def _parse_thresholds(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"bad threshold list {text!r}") from None
    if not values or any(not 0.0 < v < 1.0 for v in values):
        raise ConfigurationError(f"thresholds must lie in (0, 1), got {text!r}")
    return values


def load_config(args: argparse.Namespace) -> Config:
    overrides = _parse_overrides(args.set)
    for key in ("seed", "log_level", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    for key in ("stage", "steps"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return Config.load(args.config, overrides)


# Subcommands


def cmd_extract_pocket(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    protein = load_structure(run.read(args.structure))
    ligand = load_molecule(run.read(args.ligand))
    radius = args.radius if args.radius is not None else config.pocket_radius
    positions = pocket_residue_positions(protein, ligand, radius)
    if not positions:
        raise EmptyPocketError(f"no residue within {radius} Å of the ligand")
    pocket = ProteinStructure(residues=[protein.residues[i] for i in positions], name=protein.name)
    run.wrote(write_structure(args.out, pocket))
    console.print(f"{len(positions)} of {len(protein)} residues within {radius:g} Å -> {args.out}")
    return EXIT_OK


def cmd_curate(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    homology = args.homology if args.homology is not None else config.homology_threshold
    min_residues = args.min_residues if args.min_residues is not None else config.min_residues
    radius = args.radius if args.radius is not None else config.pocket_radius
    thresholds = _parse_thresholds(args.stats_thresholds)
    if not 0.0 < homology < 1.0:
        raise ConfigurationError(f"--homology must lie in (0, 1), got {homology}")

    raws = load_raw_records(
        run.read_manifest_files(args.manifest), run.read(args.labels) if args.labels else None
    )
    filtered = []
    for raw in raws:
        n = len(pocket_residue_positions(raw.protein, raw.substrate, radius))
        if n < min_residues:
            logger.warning("%s: pocket has %d residues (< %d), dropped", raw.record_id, n, min_residues)
            continue
        filtered.append(raw)
    logger.info("Pocket filter kept %d of %d records", len(filtered), len(raws))

    kept = debias(filtered, homology).records
    out = Path(args.out)
    held_out = []
    if args.held_out_per_class > 0:
        kept, held_out = stratified_evaluation_split(kept, args.held_out_per_class, seed=config.seed)
        run.wrote(write_raw_records(out, held_out, manifest_name="held_out.tsv"))
    run.wrote(write_raw_records(out, kept))

    rows = [s.as_row() for s in stats_by_threshold(filtered, thresholds)]
    run.wrote(write_tsv(out / "stats.tsv", rows))
    console.print(stats_table(rows))
    console.print(
        f"Curated {len(kept)} records at {homology:.0%} homology"
        + (f", {len(held_out)} held out" if held_out else "")
    )
    return EXIT_OK


def cmd_synth_data(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    synth = SyntheticConfig(
        records=args.records if args.records is not None else config.synthetic_records,
        pocket_residues=config.synthetic_pocket_residues,
        distal_residues=config.synthetic_distal_residues,
    )
    records = generate_synthetic_dataset(config.seed, synth)
    run.wrote(write_raw_records(args.out, records))
    digest = dataset_digest(records)
    logger.info("Synthetic dataset digest %s", digest)
    console.print(f"Wrote {len(records)} synthetic records to {args.out} (digest {digest[:12]})")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    train_config = config.train_config()
    stage = train_config.stage
    dataset = load_dataset(
        run.read_manifest_files(args.manifest),
        run.read(args.labels) if args.labels else None,
        radius=config.pocket_radius,
        n_msa=config.n_msa,
        n_token=config.n_token,
    )
    if args.init:
        network, _ = load_checkpoint(run.read(args.init), config.model_config())
    else:
        network = build_network(config.model_config(), seed=config.seed)
    out = Path(args.out) if args.out else Path(config.output_dir) / f"{stage.value}.pt"

    runlog = RunLog(Path(config.output_dir) / "runlog.sqlite")
    run_id = runlog.start_run("train", config.digest(), config.seed, stage.value)

    with Progress(
        TextColumn("[bold]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TextColumn("loss {task.fields[loss]:.4f}"),
        TimeRemainingColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(f"train {stage.value}", total=train_config.steps, loss=float("nan"))

        def on_step(record) -> None:
            runlog.log_step(run_id, record.step, record.total, record.components)
            progress.update(task, advance=1, loss=record.total)

        try:
            result = train_stage(train_config, dataset, on_step=on_step, network=network)
        except TrainingAbortedError as e:
            network.load_state_dict(e.last_good_state)
            rescue = out.with_name(out.stem + ".last-good" + out.suffix)
            save_checkpoint(rescue, network, config.digest(), stage=stage.value)
            run.wrote(rescue)
            logger.error("Training aborted; last good parameters saved to %s", rescue)
            run.finish(status="aborted", error=str(e))
            raise

    stats = {"mean": result.affinity_stats.mean, "std": result.affinity_stats.std}
    run.wrote(save_checkpoint(out, result.network, config.digest(), affinity_stats=stats, stage=stage.value))

    totals = runlog.get_totals(run_id)
    console.print(loss_chart(moving_average(totals)))
    final = result.history[-1]
    console.print(loss_table({"total": final.total, **final.components}))
    if totals[0] > 0:
        console.print(f"Loss reduced by {1.0 - totals[-1] / totals[0]:.1%} over {len(totals)} steps")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    network, payload = load_checkpoint(run.read(args.checkpoint))
    enzyme = payload.get("stage") == Stage.ENZYME.value
    steps = args.T if args.T is not None else config.sample_steps

    if args.record:
        if not args.manifest:
            raise ConfigurationError("--record needs --manifest")
        entries = {e.record_id: e for e in read_manifest(run.read_manifest_files(args.manifest))}
        if args.record not in entries:
            raise ConfigurationError(f"record {args.record!r} is not in {args.manifest}")
        reference = assemble_record(
            load_raw_record(entries[args.record]),
            CoEvoVocabulary.load(),
            radius=config.pocket_radius,
            n_msa=network.config.n_msa,
            n_token=network.config.n_token,
        )
        substrate, product, origin = reference.substrate, reference.product, reference.origin
        n_res = args.n_res or len(reference.pocket)
        name = record_id = reference.record_id
    elif args.substrate:
        if not args.n_res:
            raise ConfigurationError("--substrate needs --n-res")
        molecule = load_molecule(run.read(args.substrate))
        origin = molecule.centroid
        substrate = molecule_to_3d(molecule, origin)
        product = molecule_to_2d(load_molecule(run.read(args.product))) if args.product else None
        n_res = args.n_res
        name, record_id = Path(args.substrate).name.split(".")[0], None
    else:
        raise ConfigurationError("sample needs --record (with --manifest) or --substrate")

    out = Path(args.out) if args.out else Path(config.output_dir) / "samples"
    for i in range(args.n_samples):
        seed = config.seed + i
        generator = torch.Generator().manual_seed(seed)
        result = sample(
            network, substrate, product, n_res, num_steps=steps, generator=generator,
            with_ec=enzyme, with_coevo=enzyme,
        )
        path = write_sample(
            out / f"{name}_s{seed}.sample",
            result.pocket,
            seed=seed,
            steps=steps,
            config_hash=config.digest(),
            ec=result.ec,
            coevo=result.coevo,
            record_id=record_id,
            origin=origin,
        )
        run.wrote(path)
    console.print(f"Wrote {args.n_samples} sample(s) of {n_res} residues to {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    references = {
        r.record_id: r
        for r in load_dataset(
            run.read_manifest_files(args.manifest),
            run.read(args.labels) if args.labels else None,
            radius=config.pocket_radius,
            n_msa=config.n_msa,
            n_token=config.n_token,
        )
    }
    paths = sorted(Path(args.samples).glob("*.sample"))
    if not paths:
        raise InputError(f"no .sample files in {args.samples}")
    samples = [(p.name, load_sample(run.read(p))) for p in paths]
    report = evaluate_samples(samples, references, k=args.k)
    out = Path(args.out) if args.out else Path(config.output_dir) / "evaluation"
    for path in write_report(report, out).values():
        run.wrote(path)
    console.print(report_table(report_rows(report)))
    if report.skipped:
        console.print(f"[yellow]{len(report.skipped)} sample(s) skipped[/]")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, config: Config, run: RunContext) -> int:
    if args.checkpoint:
        network, _ = load_checkpoint(run.read(args.checkpoint))
    else:
        network = build_network(config.model_config(), seed=config.seed)
    datum = canonical_instance(n_msa=network.config.n_msa, n_token=network.config.n_token, seed=config.seed)
    stage = Stage(config.stage)
    report = gradcheck(network, datum, stage, config.loss_config(), seed=config.seed)

    rows = [{"parameter": e.name, "shape": "x".join(map(str, e.shape)), "max_rel_error": e.max_rel_error}
            for e in report.entries]
    run.wrote(write_tsv(Path(config.output_dir) / "gradcheck.tsv", rows))
    console.print(gradcheck_table(report.entries, report.threshold))
    if not report.passed:
        names = ", ".join(e.name for e in report.failures())
        raise NumericError(
            f"gradient check failed: max relative error {report.max_error:.3e} in {names}", stage="gradcheck"
        )
    console.print(f"[green]Gradient check passed[/] (max relative error {report.max_error:.3e})")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, config: Config, run: Optional[RunContext]) -> int:
    manifest = read_run_manifest(args.manifest)
    for path, digest in manifest.inputs.items():
        if not Path(path).exists():
            logger.warning("Recorded input %s no longer exists", path)
        elif file_digest(path) != digest:
            logger.warning("Recorded input %s has changed since the run", path)
    logger.info("Replaying %s: %s", manifest.command, " ".join(manifest.argv))
    return main(manifest.argv)


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pocketforge",
        description="Generate enzyme pockets for a substrate and product with SE(3) and discrete flows",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="run config file (key = value lines)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    parser.add_argument("--seed", type=int, help="random seed (config key seed)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    parser.add_argument("--output-dir", type=Path, help="where manifests, run logs and defaults go")
    parser.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("extract-pocket", help="cut the residues around a ligand out of a structure")
    p.add_argument("--structure", required=True, type=Path)
    p.add_argument("--ligand", required=True, type=Path)
    p.add_argument("--radius", type=float, help="Å, CA to any ligand atom")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(handler=cmd_extract_pocket)

    p = sub.add_parser("curate", help="pocket filter, homology debias and dataset statistics")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--homology", type=float, help="identity threshold for debiasing")
    p.add_argument("--min-residues", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--stats-thresholds", default="0.4,0.5,0.6,0.8,0.9")
    p.add_argument("--held-out-per-class", type=int, default=0)
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("synth-data", help="write a procedural dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--records", type=int)
    p.set_defaults(handler=cmd_synth_data)

    p = sub.add_parser("train", help="train one stage")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--stage", choices=STAGES)
    p.add_argument("--steps", type=int)
    p.add_argument("--init", type=Path, help="checkpoint of the previous stage")
    p.add_argument("--out", type=Path, help="checkpoint path (default <output_dir>/<stage>.pt)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="generate pockets from a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--record", help="condition on this manifest record")
    p.add_argument("--substrate", type=Path)
    p.add_argument("--product", type=Path)
    p.add_argument("--n-res", type=int, help="pocket size (default: the reference pocket's)")
    p.add_argument("--T", type=int, help="integration steps (default config sample_steps)")
    p.add_argument("--n-samples", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("evaluate", help="score sample files against reference records")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--samples", required=True, type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter gradient")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--stage", choices=STAGES)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("replay", help="re-run a recorded run manifest")
    p.add_argument("manifest", type=Path)
    p.set_defaults(handler=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    setup_logging(args.log_level or "INFO")

    try:
        config = load_config(args)
        setup_logging(config.log_level)
        if args.print_config:
            sys.stdout.write(config.describe())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        handler: Callable = args.handler
        if args.command == "replay":
            return handler(args, config, None)
        if args.command == "sample" and args.n_samples < 1:
            raise ConfigurationError("--n-samples must be at least 1")
        run = RunContext(args.command, argv, config)
        code = handler(args, config, run)
        run.finish()
        return code
    except Exception as e:
        logger.debug("Run failed", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return exit_code_for(e)
