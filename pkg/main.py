"""
radgate - Main Application
Command-line radiomics toolkit: DICOM cataloguing and quality gating, NRRD
conversion, pre-processing, feature extraction and feature analysis.

Every subcommand reads one tree and writes one output set; outputs are staged
and only moved into place when the subcommand succeeds.
"""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

from dotenv import load_dotenv

# Import business logic
from business_logic.dataset_description import DescribeMode, describe
from business_logic.feature_analysis import AnalysisBox
from business_logic.preprocessing import PreprocessChain
from business_logic.quality_checks import quality_check, report_ids, summarize
from business_logic.radiomics_features import extract
from business_logic.volume_builder import ConversionResult, convert_record

# Import models
from models.config_models import (
    CHECK_NAMES,
    ExtractionParams,
    PreprocessParams,
    QualitySpec,
    RunConfig,
    jobs_from_environment,
    load_config,
    validate_config,
)
from models.exceptions import EmptyDataset, RadgateError, UnknownSubcommand, UsageError
from models.imaging_models import DataFormat, DatasetLayout, SeriesRecord, Volume

# Import readers and storage
from readers.base_reader import ReaderConfig
from readers.dicom_dataset_reader import DicomDatasetReader
from readers.nrrd_dataset_reader import NrrdCase, NrrdDatasetReader
from reporting.quick_check import unroll
from storage.atomic_writer import StagedOutput
from storage.nrrd_io import read_nrrd, write_nrrd
from storage.table_writer import write_records, write_table

from fixtures.generator import KINDS, gen_fixtures

logger = logging.getLogger("radgate")

SUBCOMMANDS = ("describe", "check", "convert", "preprocess", "unroll", "extract", "analyze", "gen-fixtures")
LOG_FORMAT = "[{subcommand}] %(levelname)s %(name)s: %(message)s"

CONVERTED_DIR = "converted_nrrds"
QUICK_CHECK_DIR = "images_quick_check"
REPORTS_DIR = "reports"


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become exceptions so run() decides the exit status."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="radgate", description="Radiomics dataset toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=None, help="patients processed in parallel (env RADGATE_JOBS)")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="subcommand", required=True)

    p = commands.add_parser("describe", parents=[common], help="acquisition metadata table")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV file")
    p.add_argument("--mode", choices=[m.value for m in DescribeMode], default=DescribeMode.DEFAULT.value)

    p = commands.add_parser("check", parents=[common], help="quality gate report")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--spec", type=Path, required=True, help="QualitySpec JSON")
    p.add_argument("--out", type=Path, required=True, help="CSV file")

    p = commands.add_parser("convert", parents=[common], help="DICOM series and RTSTRUCT to NRRD")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help=f"work directory; writes {CONVERTED_DIR}/")
    p.add_argument("--roi", default=None, help="ROI written as mask.nrrd (default: first)")
    p.add_argument("--spec", type=Path, default=None, help="convert only series passing this QualitySpec")

    p = commands.add_parser("preprocess", parents=[common], help="apply a pre-processing chain")
    p.add_argument("--root", type=Path, required=True, help=f"a {CONVERTED_DIR} tree")
    p.add_argument("--params", type=Path, required=True, help="PreprocessParams JSON")
    p.add_argument("--out", type=Path, required=True, help=f"work directory; writes {CONVERTED_DIR}/ and {REPORTS_DIR}/")

    p = commands.add_parser("unroll", parents=[common], help="per-slice quick-check images")
    p.add_argument("--root", type=Path, required=True, help=f"a {CONVERTED_DIR} tree")
    p.add_argument("--out", type=Path, required=True, help=f"work directory; writes {QUICK_CHECK_DIR}/")
    p.add_argument("--window", type=float, nargs=2, metavar=("LEVEL", "WIDTH"), default=None)

    p = commands.add_parser("extract", parents=[common], help="radiomics feature table")
    p.add_argument("--root", type=Path, required=True, help=f"a {CONVERTED_DIR} tree")
    p.add_argument("--params", type=Path, default=None, help="ExtractionParams JSON")
    p.add_argument("--out", type=Path, required=True, help="CSV file")

    p = commands.add_parser("analyze", parents=[common], help="feature analysis report")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--clinical", type=Path, default=None)
    p.add_argument("--patient-column", default=None)
    p.add_argument("--volume", default=None, help="volume feature for the correlation plots")
    p.add_argument("--include", nargs="+", default=None)
    p.add_argument("--exclude", nargs="+", default=[])
    p.add_argument("--drop-patients", nargs="+", default=[])
    p.add_argument("--nan-axis", choices=["patients", "features"], default="patients")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--auc-threshold", type=float, default=0.70)
    p.add_argument("--corr-threshold", type=float, default=0.75)
    p.add_argument("--out", type=Path, required=True, help=f"work directory; writes {REPORTS_DIR}/")

    p = commands.add_parser("gen-fixtures", parents=[common], help="seeded synthetic datasets")
    p.add_argument("--kind", choices=KINDS, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _configure_logging(subcommand: str, verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT.format(subcommand=subcommand),
        stream=sys.stderr,
        force=True,
    )


class RadgateApp:
    """
    Main application class.
    Resolves the run configuration and dispatches to one subcommand.
    """

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.config: RunConfig = validate_config(RunConfig, {
            "subcommand": args.subcommand,
            "root": getattr(args, "root", None),
            "out": getattr(args, "out", None),
            "spec": getattr(args, "spec", None),
            "params": getattr(args, "params", None),
            "roi": getattr(args, "roi", None),
            "window": getattr(args, "window", None),
            "alpha": getattr(args, "alpha", 0.05),
            "auc_threshold": getattr(args, "auc_threshold", 0.70),
            "corr_threshold": getattr(args, "corr_threshold", 0.75),
            "jobs": jobs_from_environment(args.jobs),
        })
        self.handlers: Dict[str, Callable[[], None]] = {
            "describe": self.describe,
            "check": self.check,
            "convert": self.convert,
            "preprocess": self.preprocess,
            "unroll": self.unroll,
            "extract": self.extract,
            "analyze": self.analyze,
            "gen-fixtures": self.generate_fixtures,
        }

    @property
    def root(self) -> Path:
        assert self.config.root is not None
        return self.config.root

    @property
    def out(self) -> Path:
        assert self.config.out is not None
        return self.config.out

    def run(self) -> None:
        self.handlers[self.config.subcommand]()

    # --- DICOM stages -----------------------------------------------------

    def _scan(self) -> Tuple[List[SeriesRecord], DicomDatasetReader]:
        reader = DicomDatasetReader(DatasetLayout(self.root), ReaderConfig(jobs=self.config.jobs))
        records = reader.read()
        print(f"🔍 {reader.files_seen} DICOM files, {len(records)} series, {len(reader.excluded_series)} excluded")
        return records, reader

    def describe(self) -> None:
        records, _ = self._scan()
        frame = describe(records, DescribeMode(self.args.mode))
        write_table(frame, self.out)
        print(f"✅ Described {len(records)} series -> {self.out}")

    def check(self) -> None:
        assert self.config.spec is not None
        spec = load_config(QualitySpec, self.config.spec)
        records, reader = self._scan()
        report = quality_check(records, spec, reader.excluded_series, self.config.jobs)
        write_records(report.to_records(), self.out, ["patient", "series_uid", *CHECK_NAMES, "overall", "note"])
        passed = sum(row.overall for row in report.rows)
        print(f"✅ {passed}/{len(report.rows)} series passed -> {self.out}")
        for name, count in summarize(report).items():
            if count:
                print(f"❌ {name}: {count} failed")

    def convert(self) -> None:
        records, reader = self._scan()
        if self.config.spec is not None:
            report = quality_check(records, load_config(QualitySpec, self.config.spec), (), self.config.jobs)
            passing = {row.series_uid for row in report.rows if row.overall}
            skipped = [r.patient_id for r in records if r.series_uid not in passing]
            if skipped:
                logger.warning("Not converting %d series failing the quality gate: %s", len(skipped), ", ".join(skipped))
            records = [r for r in records if r.series_uid in passing]
        if not records:
            raise EmptyDataset(f"No series to convert under {self.root}")

        names = report_ids([(r.patient_id, r.series_uid) for r in records])
        with StagedOutput(self.out / CONVERTED_DIR) as stage:
            def convert_one(item: Tuple[str, SeriesRecord]) -> ConversionResult:
                name, record = item
                return convert_record(record, stage / name, self.config.roi)

            work = list(zip(names, records))
            if self.config.jobs > 1:
                with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                    results = list(pool.map(convert_one, work))
            else:
                results = [convert_one(item) for item in work]
        masked = sum(1 for result in results if result.selected_roi is not None)
        warnings = sum(len(result.warnings) for result in results)
        print(f"✅ Converted {len(results)} series ({masked} with mask, {warnings} warnings) -> {self.out / CONVERTED_DIR}")

    # --- NRRD stages ------------------------------------------------------

    def _cases(self, masks: bool = True) -> List[NrrdCase]:
        layout = DatasetLayout(self.root, DataFormat.NRRD, mask_available=masks)
        reader = NrrdDatasetReader(layout, ReaderConfig(jobs=self.config.jobs))
        cases = reader.read()
        for patient, reason in reader.excluded:
            print(f"❌ {patient}: {reason}")
        return cases

    def _reference(self, reference: str) -> Volume:
        """A patient id in the input tree, else a path to an NRRD file."""
        candidate = self.root / reference / "image.nrrd"
        return read_nrrd(candidate if candidate.is_file() else Path(reference))

    def preprocess(self) -> None:
        assert self.config.params is not None
        chain = PreprocessChain(load_config(PreprocessParams, self.config.params), self._reference)
        cases = self._cases()
        rows = []
        # volumes and the log commit together
        with StagedOutput(self.out, replace_depth=2) as stage:
            for case in cases:
                result = chain.run(case.image, case.mask, case.patient_id)
                write_nrrd(result.volume, stage / CONVERTED_DIR / case.patient_id / "image.nrrd")
                if result.mask is not None:
                    write_nrrd(result.mask, stage / CONVERTED_DIR / case.patient_id / "mask.nrrd")
                rows.extend(stats.to_row() for stats in result.stats)
            write_records(rows, stage / REPORTS_DIR / "preprocess_log.csv")
        print(f"✅ Pre-processed {len(cases)} patients with {len(chain.params.steps)} steps -> {self.out / CONVERTED_DIR}")

    def unroll(self) -> None:
        cases = self._cases()
        window = tuple(self.config.window) if self.config.window is not None else None
        with StagedOutput(self.out / QUICK_CHECK_DIR) as stage:
            total = sum(len(unroll(case.image, stage, case.patient_id, case.mask, window)) for case in cases)  # type: ignore[arg-type]
        print(f"✅ Wrote {total} slice images for {len(cases)} patients -> {self.out / QUICK_CHECK_DIR}")

    def extract(self) -> None:
        params = load_config(ExtractionParams, self.config.params) if self.config.params is not None else ExtractionParams()
        result = extract(self._cases(), params, self.config.jobs)
        write_table(result.table.frame, self.out, index=True)
        for patient, reason in sorted(result.failures.items()):
            print(f"❌ {patient}: {reason}")
        print(f"✅ {len(result.table.patients)} patients x {len(result.table.feature_names)} features -> {self.out}")

    # --- Tables -----------------------------------------------------------

    def analyze(self) -> None:
        args = self.args
        box = AnalysisBox.from_csv(
            args.features,
            args.outcome,
            include=args.include,
            exclude=args.exclude,
            drop_patients=args.drop_patients,
            patient_column=args.patient_column,
            clinical_path=args.clinical,
            alpha=self.config.alpha,
            auc_threshold=self.config.auc_threshold,
            corr_threshold=self.config.corr_threshold,
        )
        print(f"📊 {box.summary}")
        dropped = box.handle_nan(args.nan_axis)
        if dropped:
            print(f"⚠️  Dropped {len(dropped.dropped)} {dropped.axis}: {', '.join(dropped.dropped)}")
        with StagedOutput(self.out / REPORTS_DIR) as stage:
            report = box.run(stage, args.volume)
        print(f"✅ Basic stats and {len(report.plots)} plots -> {self.out / REPORTS_DIR}")

    def generate_fixtures(self) -> None:
        with StagedOutput(self.out) as stage:
            written = gen_fixtures(self.args.kind, self.args.seed, stage)
        print(f"✅ Generated {len(written)} files ({self.args.kind}, seed {self.args.seed}) -> {self.out}")


def _check_subcommand(argv: Sequence[str]) -> None:
    first = next((arg for arg in argv if not arg.startswith("-")), None)
    if first is not None and first not in SUBCOMMANDS:
        raise UnknownSubcommand(f"Unknown subcommand '{first}' (expected one of {', '.join(SUBCOMMANDS)})")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Exit status: 0 success, 1 validation error, 2 I/O error."""
    argv = list(sys.argv[1:] if argv is None else argv)
    load_dotenv()
    parser = build_parser()
    try:
        _check_subcommand(argv)
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        if isinstance(e, UnknownSubcommand):
            parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    _configure_logging(args.subcommand, args.verbose)
    try:
        RadgateApp(args).run()
    except ValueError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except RadgateError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"❌ {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    """Application entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
