"""Command-line orchestration of the full data-generation pipeline.

Subcommands map to pipeline stages (extract, generate, eval), parameter
sweeps (sweep-threshold, sweep-ratio), and the whole chain (full). All
artifacts land under a config-hash-named directory so identical runs reuse
identical paths and produce byte-identical trees.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .aspects import (
    AspectPool,
    DemoMode,
    DemoStrategy,
    default_demo_bank,
    evaluate_aspects,
    extend_aspects,
    extract_aspects,
    filter_non_nouns,
    load_demo_bank,
    partition_by_sentiment,
)
from .corpus import (
    DatasetFormatError,
    DatasetValidationError,
    LabeledSample,
    PolarityLabel,
    dataset_stats,
    emit_dataset,
    load_gold_dataset,
    load_unlabeled_corpus,
    normalize_text,
)
from .errors import ConfigurationError, PipelineError
from .gateway import (
    Fixture,
    Gateway,
    GatewayError,
    HttpProvider,
    ProviderSettings,
    RecordingProvider,
    ReplayProvider,
)
from .generation import GenerationConfig, run_iterative_generation
from .harness import compare_regimes, diversity_metrics
from .judge import Discriminator

log = logging.getLogger(__name__)

THRESHOLD_SWEEP = (0, 2, 4, 6, 8)
RATIO_SWEEP = (0.5, 1.0, 1.5, 2.0, 2.5)

STRATEGY_MODES = {
    "zero": DemoMode.ZERO_SHOT,
    "related": DemoMode.FEW_SHOT_RELATED,
    "random": DemoMode.FEW_SHOT_RANDOM,
}


@dataclass
class RunConfig:
    corpus_path: str | None = None
    domain: str = ""
    out_dir: str = "out"
    provider: str = "replay"  # live | replay | record
    fixture_path: str | None = None
    provider_settings: str | None = None
    seed: int | None = None
    strategy: str = "random"  # zero | related | random
    demo_k: int = 3
    demo_bank: str | None = None
    gold_path: str | None = None
    gold_format: str = "jsonl"
    test_path: str | None = None
    test_format: str = "jsonl"
    generated_path: str | None = None
    pool_path: str | None = None
    threshold: int = 6
    strict_threshold: bool = False
    ratio: float = 1.0
    rounds: int = 20
    batch_per_round: int | None = None
    feedback_k: int = 2
    strategy_mix: float = 0.5
    aspects_per_multi: int = 2
    length_min: int = 10
    length_max: int = 30
    concurrency: int = 4

    def validate(self) -> None:
        if self.provider not in ("live", "replay", "record"):
            raise ConfigurationError(f"unknown provider mode: {self.provider!r}")
        if self.provider == "replay":
            if self.fixture_path is None:
                raise ConfigurationError("replay mode requires --fixture")
            if self.seed is None:
                raise ConfigurationError(
                    "replay mode requires an explicit --seed for reproducibility"
                )
        if self.provider == "record" and self.fixture_path is None:
            raise ConfigurationError("record mode requires --fixture to write to")
        if self.strategy not in STRATEGY_MODES:
            raise ConfigurationError(f"unknown strategy: {self.strategy!r}")
        if not 1 <= self.threshold <= 10:
            raise ConfigurationError(f"threshold {self.threshold} outside 1..10")
        if self.ratio <= 0:
            raise ConfigurationError(f"ratio must be > 0, got {self.ratio}")
        if self.gold_format not in ("jsonl", "semeval-xml"):
            raise ConfigurationError(f"unknown gold format: {self.gold_format!r}")
        if self.test_format not in ("jsonl", "semeval-xml"):
            raise ConfigurationError(f"unknown test format: {self.test_format!r}")

    def config_hash(self) -> str:
        record = asdict(self)
        record.pop("out_dir")
        payload = json.dumps(record, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.config_hash()

    def effective_seed(self) -> int:
        return self.seed if self.seed is not None else 0

    def demo_strategy(self) -> DemoStrategy:
        mode = STRATEGY_MODES[self.strategy]
        k = 0 if mode is DemoMode.ZERO_SHOT else self.demo_k
        return DemoStrategy(mode=mode, k=k)


def make_gateway(config: RunConfig) -> Gateway:
    if config.provider == "replay":
        provider = ReplayProvider(Fixture.load(config.fixture_path))
    elif config.provider == "record":
        if config.provider_settings is None:
            raise ConfigurationError("record mode requires --provider-config")
        live = HttpProvider(ProviderSettings.from_file(config.provider_settings))
        provider = RecordingProvider(live, config.fixture_path)
    else:
        if config.provider_settings is None:
            raise ConfigurationError("live mode requires --provider-config")
        provider = HttpProvider(ProviderSettings.from_file(config.provider_settings))
    return Gateway(provider, concurrency=config.concurrency)


def _write_json(path: Path, payload: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, sort_keys=True, indent=2)
        handle.write("\n")


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def write_pool_file(pool: AspectPool, path: Path) -> None:
    _write_json(
        path,
        {
            "all": sorted(pool.all),
            "positive": sorted(pool.positive),
            "neutral": sorted(pool.neutral),
            "negative": sorted(pool.negative),
        },
    )


def load_pool_file(path: str | Path) -> AspectPool:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    return AspectPool(
        all=frozenset(record["all"]),
        positive=frozenset(record["positive"]),
        neutral=frozenset(record["neutral"]),
        negative=frozenset(record["negative"]),
    )


def _load_gold(config: RunConfig) -> list[LabeledSample]:
    if config.gold_path is None:
        raise ConfigurationError("this command requires --gold")
    return load_gold_dataset(config.gold_path, config.gold_format, config.domain)


def run_extract(config: RunConfig, gateway: Gateway | None = None) -> AspectPool:
    if config.corpus_path is None:
        raise ConfigurationError("extract requires --corpus")
    corpus = load_unlabeled_corpus(config.corpus_path, config.domain)
    bank = (
        load_demo_bank(config.demo_bank)
        if config.demo_bank is not None
        else default_demo_bank()
    )
    gateway = gateway if gateway is not None else make_gateway(config)
    extracted = extract_aspects(
        corpus,
        config.demo_strategy(),
        bank,
        gateway,
        seed=config.effective_seed(),
    )
    nouns = filter_non_nouns(extracted)
    extended = extend_aspects(nouns, gateway, domain=config.domain)
    pool = partition_by_sentiment(extended)
    base = config.run_dir()
    write_pool_file(pool, base / "aspect_pool.json")
    if config.gold_path is not None:
        gold = _load_gold(config)
        gold_aspects = {
            normalize_text(ann.term) for sample in gold for ann in sample.annotations
        }
        report = evaluate_aspects(pool.all, gold_aspects)
        _write_json(
            base / "aspect_eval.json",
            {"precision": report.precision, "recall": report.recall, "f1": report.f1},
        )
    log.info("aspect pool written to %s", base / "aspect_pool.json")
    return pool


def _targets_from_gold(
    gold: list[LabeledSample], ratio: float
) -> dict[PolarityLabel, int]:
    stats = dataset_stats(gold)
    # Half-up rounding keeps R=0.5 of an odd count deterministic and intuitive.
    return {
        PolarityLabel.POSITIVE: int(ratio * stats.positive + 0.5),
        PolarityLabel.NEUTRAL: int(ratio * stats.neutral + 0.5),
        PolarityLabel.NEGATIVE: int(ratio * stats.negative + 0.5),
    }


def _judgment_log(round_log: list[dict]) -> list[dict]:
    """One line per judged sample: flags, sub-scores, overall, kept."""
    entries: dict[str, dict] = {}
    order: list[str] = []
    for record in round_log:
        sample_id = record.get("sample_id")
        if sample_id is None:
            continue
        if record["stage"] == "judge":
            judgment = record.get("judgment") or {}
            entries[sample_id] = {
                "sample_id": sample_id,
                "domain_relevant": record["domain_relevant"],
                "sentiment_relevant": record["sentiment_relevant"],
                "syntactic": judgment.get("syntactic"),
                "lexical": judgment.get("lexical"),
                "realism": judgment.get("realism"),
                "overall": judgment.get("overall"),
                "kept": False,
            }
            order.append(sample_id)
        elif record["stage"] == "filter" and sample_id in entries:
            entries[sample_id]["kept"] = record["kept"]
    return [entries[sample_id] for sample_id in order]


def run_generate(
    config: RunConfig,
    gateway: Gateway | None = None,
    pool: AspectPool | None = None,
    out_subdir: str = "generate",
    threshold: int | None = None,
    ratio: float | None = None,
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    if pool is None:
        if config.pool_path is None:
            raise ConfigurationError("generate requires --pool (or a prior extract)")
        pool = load_pool_file(config.pool_path)
    gold = _load_gold(config)
    effective_ratio = ratio if ratio is not None else config.ratio
    effective_threshold = threshold if threshold is not None else config.threshold
    targets = _targets_from_gold(gold, effective_ratio)
    generation_config = GenerationConfig(
        domain=config.domain,
        target_counts=targets,
        rounds=config.rounds,
        batch_per_round=config.batch_per_round,
        feedback_k=config.feedback_k,
        strategy_mix=config.strategy_mix,
        aspects_per_multi=config.aspects_per_multi,
        length_hint=(config.length_min, config.length_max),
        seed=config.effective_seed(),
    )
    gateway = gateway if gateway is not None else make_gateway(config)
    discriminator = Discriminator(
        gateway,
        config.domain,
        threshold=effective_threshold,
        strict=config.strict_threshold,
    )
    round_log: list[dict] = []
    kept, rejected = run_iterative_generation(
        pool, generation_config, discriminator, gateway, round_log=round_log
    )
    base = config.run_dir() / out_subdir
    emit_dataset(kept, base / "kept.jsonl", "jsonl")
    emit_dataset(rejected, base / "rejected.jsonl", "jsonl")
    _write_jsonl(base / "round_log.jsonl", round_log)
    _write_jsonl(base / "judgment_log.jsonl", _judgment_log(round_log))
    kept_stats = dataset_stats(kept)
    _write_json(
        base / "meta.json",
        {
            "targets": {pol.to_name(): n for pol, n in targets.items()},
            "threshold": effective_threshold,
            "strict_threshold": config.strict_threshold,
            "ratio": effective_ratio,
            "kept": len(kept),
            "rejected": len(rejected),
            "kept_counts": {
                "positive": kept_stats.positive,
                "neutral": kept_stats.neutral,
                "negative": kept_stats.negative,
            },
        },
    )
    log.info("kept %d samples, rejected %d (%s)", len(kept), len(rejected), base)
    return kept, rejected


def _report_table(reports: dict) -> str:
    lines = [f"{'regime':<12} {'accuracy':>9} {'macro_f1':>9}"]
    for name in ("original", "generated", "mixed"):
        report = reports[name]
        lines.append(f"{name:<12} {report.accuracy:>9.4f} {report.macro_f1:>9.4f}")
    return "\n".join(lines) + "\n"


def run_eval(
    config: RunConfig,
    generated: list[LabeledSample] | None = None,
    out_subdir: str = "eval",
) -> dict:
    gold = _load_gold(config)
    if config.test_path is None:
        raise ConfigurationError("eval requires --test")
    test = load_gold_dataset(config.test_path, config.test_format, config.domain)
    if generated is None:
        if config.generated_path is None:
            raise ConfigurationError("eval requires --generated (or a prior generate)")
        generated = load_gold_dataset(config.generated_path, "jsonl", config.domain)
    reports = compare_regimes(gold, generated, test, seed=config.effective_seed())
    base = config.run_dir() / out_subdir
    payload = {name: report.to_dict() for name, report in reports.items()}
    payload["diversity_generated"] = diversity_metrics(generated)
    _write_json(base / "report.json", payload)
    (base / "report.txt").write_text(_report_table(reports), encoding="utf-8")
    log.info("regime report written to %s", base / "report.json")
    return reports


def run_sweep_threshold(config: RunConfig, gateway: Gateway | None = None) -> None:
    gateway = gateway if gateway is not None else make_gateway(config)
    pool = (
        load_pool_file(config.pool_path)
        if config.pool_path is not None
        else run_extract(config, gateway=gateway)
    )
    for threshold in THRESHOLD_SWEEP:
        subdir = f"sweep_threshold/threshold_{threshold}"
        kept, _ = run_generate(
            config, gateway=gateway, pool=pool, out_subdir=subdir, threshold=threshold
        )
        if config.test_path is not None:
            run_eval(config, generated=kept, out_subdir=subdir)


def run_sweep_ratio(config: RunConfig, gateway: Gateway | None = None) -> None:
    gateway = gateway if gateway is not None else make_gateway(config)
    pool = (
        load_pool_file(config.pool_path)
        if config.pool_path is not None
        else run_extract(config, gateway=gateway)
    )
    for ratio in RATIO_SWEEP:
        subdir = f"sweep_ratio/ratio_{ratio}"
        kept, _ = run_generate(
            config, gateway=gateway, pool=pool, out_subdir=subdir, ratio=ratio
        )
        if config.test_path is not None:
            run_eval(config, generated=kept, out_subdir=subdir)


def run_full(config: RunConfig, gateway: Gateway | None = None) -> None:
    gateway = gateway if gateway is not None else make_gateway(config)
    pool = run_extract(config, gateway=gateway)
    kept, _ = run_generate(config, gateway=gateway, pool=pool)
    if config.test_path is not None:
        run_eval(config, generated=kept)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="absagen",
        description="Generate and evaluate synthetic aspect-sentiment datasets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("extract", "extract, clean, extend, and partition domain aspects"),
        ("generate", "generate and filter pseudo-labeled samples"),
        ("eval", "compare original/generated/mixed training regimes"),
        ("sweep-threshold", "run generation across filter thresholds 0,2,4,6,8"),
        ("sweep-ratio", "run generation across size ratios 0.5..2.5"),
        ("full", "extract, generate, and evaluate in one run"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        _add_common_flags(cmd)
    return parser


def _add_common_flags(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--config", default=None, help="JSON config file; flags win")
    cmd.add_argument("--corpus", dest="corpus_path", default=None)
    cmd.add_argument("--domain", default=None)
    cmd.add_argument("--out", dest="out_dir", default=None)
    cmd.add_argument(
        "--provider", choices=("live", "replay", "record"), default=None
    )
    cmd.add_argument("--fixture", dest="fixture_path", default=None)
    cmd.add_argument("--provider-config", dest="provider_settings", default=None)
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--strategy", choices=tuple(STRATEGY_MODES), default=None)
    cmd.add_argument("--demo-k", dest="demo_k", type=int, default=None)
    cmd.add_argument("--demos", dest="demo_bank", default=None)
    cmd.add_argument("--gold", dest="gold_path", default=None)
    cmd.add_argument(
        "--gold-format", dest="gold_format", choices=("jsonl", "semeval-xml"),
        default=None,
    )
    cmd.add_argument("--test", dest="test_path", default=None)
    cmd.add_argument(
        "--test-format", dest="test_format", choices=("jsonl", "semeval-xml"),
        default=None,
    )
    cmd.add_argument("--generated", dest="generated_path", default=None)
    cmd.add_argument("--pool", dest="pool_path", default=None)
    cmd.add_argument("--threshold", type=int, default=None)
    cmd.add_argument(
        "--strict-threshold", dest="strict_threshold", action="store_const",
        const=True, default=None,
    )
    cmd.add_argument("--ratio", type=float, default=None)
    cmd.add_argument("--rounds", type=int, default=None)
    cmd.add_argument("--batch-per-round", dest="batch_per_round", type=int, default=None)
    cmd.add_argument("--feedback-k", dest="feedback_k", type=int, default=None)
    cmd.add_argument("--strategy-mix", dest="strategy_mix", type=float, default=None)
    cmd.add_argument(
        "--aspects-per-multi", dest="aspects_per_multi", type=int, default=None
    )
    cmd.add_argument("--length-min", dest="length_min", type=int, default=None)
    cmd.add_argument("--length-max", dest="length_max", type=int, default=None)
    cmd.add_argument("--concurrency", type=int, default=None)
    cmd.add_argument("-v", "--verbose", action="store_true", default=False)


def build_config(args: argparse.Namespace) -> RunConfig:
    field_names = {f.name for f in fields(RunConfig)}
    merged: dict = {}
    if args.config is not None:
        file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(file_values) - field_names
        if unknown:
            raise ConfigurationError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        merged.update(file_values)
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    config = RunConfig(**merged)
    config.validate()
    return config


COMMANDS = {
    "extract": run_extract,
    "generate": run_generate,
    "eval": run_eval,
    "sweep-threshold": run_sweep_threshold,
    "sweep-ratio": run_sweep_ratio,
    "full": run_full,
}

_USAGE_ERRORS = (
    ConfigurationError,
    DatasetFormatError,
    DatasetValidationError,
    FileNotFoundError,
)


def main(argv: list[str] | None = None) -> int:
    """Entry point. Exit codes: 0 success, 1 pipeline failure, 2 usage error."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = build_config(args)
        COMMANDS[args.command](config)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, GatewayError, OSError) as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
