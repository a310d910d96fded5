"""Staged pipeline with cached, hash-checked artifacts.

Each stage reads the previous stage's files from the run directory, writes
its own artifacts there, and records input, config, and output hashes in
``manifest.json``.  Re-running a stage whose inputs, configuration, and
outputs are all unchanged is a no-op.  A prerequisite that was never
produced raises a missing-prerequisite error naming the stages involved,
and an artifact that no longer matches the hash its producer recorded
raises a stale-artifact error instead of being silently reused.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cleaner, corpus, metrics, plots, segmenter, trainer
from .losses import FAMILIES, LossConfig

log = logging.getLogger("segharm")

STAGES = ("ingest", "clean", "threshold", "segment", "split", "train", "eval")


class PipelineError(RuntimeError):
    """Raised when a stage cannot run or produced no valid artifact."""


class MissingPrerequisiteError(PipelineError):
    """A stage's input artifact was never produced."""


class StaleArtifactError(PipelineError):
    """An input artifact no longer matches the hash its producer recorded."""


@dataclass
class RunConfig:
    """One run's paths and knobs; stages read only the keys that concern them."""

    dataset: str = ""
    out: str = "run"
    embeddings_manifest: str = ""
    abbreviations: str = ""
    section_headers: tuple = ()
    max_len: int = 512
    min_count: int = 200
    clean_threshold: float = 0.55
    eta: float = 0.5
    split_ratios: tuple = (94, 3, 3)
    seed: int = 0
    loss: str = "sh_focal"
    gamma: float = 2.0
    cb_beta: float = 0.99
    epsilon: float = 1e-12
    sh_on_positives: bool = True
    learning_rate: float = 0.0005
    batch_size: int = 32
    max_steps: int = 1000
    weight_decay: float = 0.01
    hidden_dim: int = 0
    decision_threshold: float = 0.5
    compare_families: tuple = ("bce", "sh_focal")

    def __post_init__(self):
        self.loss = str(self.loss).lower()
        if self.loss not in FAMILIES:
            raise PipelineError(f"unknown loss family {self.loss!r}; expected one of {FAMILIES}")
        if not 0.0 < self.eta <= 1.0:
            raise PipelineError("eta must lie in (0, 1]")
        self.section_headers = tuple(self.section_headers)
        self.split_ratios = tuple(int(r) for r in self.split_ratios)
        self.compare_families = tuple(str(f).lower() for f in self.compare_families)


_INT_KEYS = {"max_len", "min_count", "seed", "batch_size", "max_steps", "hidden_dim"}
_FLOAT_KEYS = {
    "clean_threshold",
    "eta",
    "gamma",
    "cb_beta",
    "epsilon",
    "learning_rate",
    "weight_decay",
    "decision_threshold",
}
_BOOL_KEYS = {"sh_on_positives"}
_STR_TUPLE_KEYS = {"section_headers", "compare_families"}
_INT_TUPLE_KEYS = {"split_ratios"}
_STR_KEYS = {"dataset", "out", "embeddings_manifest", "abbreviations", "loss"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_TUPLE_KEYS | _INT_TUPLE_KEYS | _STR_KEYS


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file; # starts a comment line."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise PipelineError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        values[key.strip()] = raw.strip()
    return values


def _coerce(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key in _STR_TUPLE_KEYS:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if key in _INT_TUPLE_KEYS:
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise PipelineError(f"bad value for {key}: {exc}") from exc


def make_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a run configuration from file values with typed overrides on top."""
    kwargs = {}
    for key, raw in (file_values or {}).items():
        if key not in _ALL_KEYS:
            raise PipelineError(f"unknown configuration key {key!r}")
        kwargs[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _ALL_KEYS:
            raise PipelineError(f"unknown configuration key {key!r}")
        kwargs[key] = value
    return RunConfig(**kwargs)


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    file_values = parse_config_file(path) if path else {}
    return make_run_config(file_values, overrides)


def loss_config_from(cfg: RunConfig, family: str | None = None) -> LossConfig:
    return LossConfig(
        family=family or cfg.loss,
        gamma=cfg.gamma,
        cb_beta=cfg.cb_beta,
        epsilon=cfg.epsilon,
        sh_on_positives=cfg.sh_on_positives,
    )


def train_config_from(cfg: RunConfig, family: str | None = None) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_steps=cfg.max_steps,
        seed=cfg.seed,
        hidden_dim=cfg.hidden_dim,
        decision_threshold=cfg.decision_threshold,
        weight_decay=cfg.weight_decay,
        loss=loss_config_from(cfg, family),
    )


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    """The run directory's record of what each stage consumed and produced."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            self.data = {"stages": {}}

    def entry(self, key: str) -> dict | None:
        return self.data["stages"].get(key)

    def output_hash(self, producer_key: str, relpath: str) -> str | None:
        entry = self.data["stages"].get(producer_key)
        if not entry:
            return None
        return entry.get("outputs", {}).get(relpath)

    def record(self, key: str, config: dict, input_hashes: dict, output_paths) -> None:
        outputs = {}
        for path in output_paths:
            rel = str(Path(path).relative_to(self.out_dir))
            outputs[rel] = _sha256_file(path)
        self.data["stages"][key] = {"config": config, "inputs": input_hashes, "outputs": outputs}
        self.path.write_text(
            json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


@dataclass
class StageDef:
    name: str
    entry_key: object  # cfg -> manifest key
    config_keys: tuple
    inputs: object  # (cfg, out) -> [(logical name, path, producer key or None)]
    run: object  # (cfg, out) -> [produced paths]


def _jsonable(value):
    return list(value) if isinstance(value, tuple) else value


def _config_subset(cfg: RunConfig, keys) -> dict:
    return {k: _jsonable(getattr(cfg, k)) for k in keys}


# ---------------------------------------------------------------- stages


def _ingest_inputs(cfg, out):
    if not cfg.dataset:
        raise PipelineError("no dataset configured; set dataset= in the config or pass --dataset")
    ins = [("dataset", Path(cfg.dataset), None)]
    if cfg.abbreviations:
        ins.append(("abbreviations", Path(cfg.abbreviations), None))
    return ins


def _run_ingest(cfg, out):
    dataset, report = corpus.load_dataset(cfg.dataset)
    abbrev = None
    if cfg.abbreviations:
        abbrev = json.loads(Path(cfg.abbreviations).read_text(encoding="utf-8"))
    if cfg.section_headers or abbrev:
        for rec in dataset.records:
            if rec.text is None:
                continue
            text = rec.text
            if cfg.section_headers:
                text = corpus.extract_sections(text, list(cfg.section_headers))
            if abbrev:
                text = corpus.expand_abbreviations(text, abbrev)
            fitted = corpus.tokenize_and_fit(text, cfg.max_len)
            kept = [t for t in fitted.tokens if t != fitted.pad_token]
            rec.text = " ".join(kept)
    corpus.save_dataset(dataset, out / "dataset.jsonl")
    (out / "ingest_report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "ingest_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    log.info("ingest: kept %d records, rejected %d", report.accepted, report.rejected)
    return [out / "dataset.jsonl", out / "ingest_report.txt", out / "ingest_report.json"]


def _clean_inputs(cfg, out):
    ins = [("ingested dataset", out / "dataset.jsonl", "ingest")]
    if cfg.embeddings_manifest:
        manifest_path = Path(cfg.embeddings_manifest)
        ins.append(("embeddings manifest", manifest_path, None))
        if manifest_path.exists():
            notes, codes = cleaner.read_embedding_manifest(manifest_path)
            for rid in sorted(notes):
                ins.append((f"note embedding {rid}", Path(notes[rid]), None))
            for cid in sorted(codes):
                ins.append((f"code embedding {cid}", Path(codes[cid]), None))
    return ins


def _run_clean(cfg, out):
    dataset, _ = corpus.load_dataset(out / "dataset.jsonl")
    rows = []
    if cfg.embeddings_manifest:
        notes, code_paths = cleaner.read_embedding_manifest(cfg.embeddings_manifest)
        code_embeddings = {cid: cleaner.read_embeddings(p) for cid, p in sorted(code_paths.items())}
        kept_records = []
        dropped = []
        for rec in dataset.records:
            note_path = notes.get(rec.id)
            if note_path is None:
                raise PipelineError(f"no note embedding for record {rec.id!r} in the manifest")
            note = cleaner.read_embeddings(note_path)
            cleaned, report = cleaner.clean_labels(rec, note, code_embeddings, cfg.clean_threshold)
            rows.extend((rec.id, code, score, kept) for code, score, kept in report.rows)
            if cleaned.codes:
                kept_records.append(cleaned)
            else:
                dropped.append(rec.id)
        universe = set()
        for rec in kept_records:
            universe.update(rec.codes)
        dataset = corpus.Dataset(records=kept_records, class_universe=universe)
        summary = (
            f"threshold       {cfg.clean_threshold!r}\n"
            f"records kept    {len(kept_records)}\n"
            f"records dropped {len(dropped)} (no code above threshold)\n"
        )
    else:
        summary = "no embeddings manifest configured; labels passed through unchanged\n"
    corpus.save_dataset(dataset, out / "cleaned.jsonl")
    lines = ["record_id,class_id,score,kept"]
    for rid, code, score, kept in rows:
        lines.append(f"{rid},{code},{score!r},{str(kept).lower()}")
    (out / "clean_report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "clean_summary.txt").write_text(summary, encoding="utf-8")
    return [out / "cleaned.jsonl", out / "clean_report.csv", out / "clean_summary.txt"]


def _run_threshold(cfg, out):
    dataset, _ = corpus.load_dataset(out / "cleaned.jsonl")
    thresholded, report = corpus.apply_frequency_threshold(dataset, cfg.min_count)
    if not thresholded.records:
        raise PipelineError("the frequency threshold removed every record; lower min_count")
    corpus.save_dataset(thresholded, out / "thresholded.jsonl")
    table = corpus.build_frequency_table(thresholded)
    corpus.write_frequency_table(table, out / "frequency_table.csv")
    (out / "threshold_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "threshold_report.txt").write_text(report.to_text(), encoding="utf-8")
    log.info(
        "threshold: removed %d classes, dropped %d records",
        len(report.removed_classes),
        len(report.dropped_records),
    )
    return [
        out / "thresholded.jsonl",
        out / "frequency_table.csv",
        out / "threshold_report.json",
        out / "threshold_report.txt",
    ]


def _run_segment(cfg, out):
    dataset, _ = corpus.load_dataset(out / "thresholded.jsonl")
    table = corpus.read_frequency_table(out / "frequency_table.csv")
    freqs = table.frequencies()
    seg = segmenter.segment_all(freqs, cfg.eta)
    segmenter.write_segmentation(seg, freqs, out / "segmentation.tsv")
    rates = segmenter.positive_counts(dataset, seg, table.rank_of)
    segmenter.write_rate_table(rates, out / "rates.csv")
    plots.save_frequency_plot(freqs, seg, out / "frequency_profile.png")
    log.info("segment: %d classes cut into %d segments", len(freqs), seg.num_segments)
    return [
        out / "segmentation.tsv",
        out / "rates.csv",
        out / "frequency_profile.png",
    ]


def _run_split(cfg, out):
    dataset, _ = corpus.load_dataset(out / "thresholded.jsonl")
    spec = trainer.SplitSpec(ratios=cfg.split_ratios, seed=cfg.seed)
    train_ds, val_ds, test_ds = trainer.stratified_split(dataset, spec)
    corpus.save_dataset(train_ds, out / "train.jsonl")
    corpus.save_dataset(val_ds, out / "val.jsonl")
    corpus.save_dataset(test_ds, out / "test.jsonl")
    summary = {
        "ratios": list(spec.ratios),
        "sizes": {"train": len(train_ds), "val": len(val_ds), "test": len(test_ds)},
        "classes": {
            "train": len(train_ds.class_universe),
            "val": len(val_ds.class_universe),
            "test": len(test_ds.class_universe),
        },
    }
    (out / "split_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    log.info("split: %d/%d/%d records", len(train_ds), len(val_ds), len(test_ds))
    return [
        out / "train.jsonl",
        out / "val.jsonl",
        out / "test.jsonl",
        out / "split_summary.json",
    ]


def _segment_families():
    """Families trained one model per segment; the rest train one model over all classes."""
    return ("sh", "sh_focal")


def _training_layout(family: str, seg: segmenter.Segmentation, rates: segmenter.RateTable, num_classes: int):
    if family in _segment_families():
        return seg, rates
    whole = segmenter.Segmentation(eta=1.0, segments=[(1, num_classes)], sigma=[0.0])
    trivial = segmenter.RateTable(positive_counts=np.array([1]), rates=np.ones((1, 1)))
    return whole, trivial


def _train_inputs(cfg, out):
    return [
        ("training split", out / "train.jsonl", "split"),
        ("segmentation", out / "segmentation.tsv", "segment"),
        ("rate table", out / "rates.csv", "segment"),
        ("frequency table", out / "frequency_table.csv", "threshold"),
    ]


def _run_train(cfg, out):
    family = cfg.loss
    train_ds, _ = corpus.load_dataset(out / "train.jsonl")
    table = corpus.read_frequency_table(out / "frequency_table.csv")
    seg = segmenter.read_segmentation(out / "segmentation.tsv")
    rates = segmenter.read_rate_table(out / "rates.csv")
    train_seg, train_rates = _training_layout(family, seg, rates, len(table))
    config = train_config_from(cfg)
    model_dir = out / "models" / family
    model_dir.mkdir(parents=True, exist_ok=True)
    # a smaller segmentation must not leave checkpoints from the old layout
    for leftover in list(model_dir.glob("segment_*.sghm")) + list(model_dir.glob("loss_*.csv")):
        leftover.unlink()
    produced = []
    histories = {}
    for r in range(train_seg.num_segments):
        model, history = trainer.train_segment_model(
            train_ds, train_seg, train_rates, r, config, table.rank_of
        )
        model_path = model_dir / f"segment_{r:03d}.sghm"
        trainer.save_model(model, model_path)
        history_path = model_dir / f"loss_{r:03d}.csv"
        trainer.write_loss_history(history, history_path)
        produced.extend([model_path, history_path])
        histories[f"segment {r}"] = history
        final = history[-1][1] if history else float("nan")
        log.info("train[%s]: segment %d done, final loss %.6f", family, r, final)
    curves = model_dir / "loss_curves.png"
    plots.save_loss_curves(histories, curves)
    produced.append(curves)
    return produced


def _family_model_paths(out, family: str, stage: str):
    model_dir = Path(out) / "models" / family
    paths = sorted(model_dir.glob("segment_*.sghm")) if model_dir.exists() else []
    if not paths:
        raise MissingPrerequisiteError(
            f"stage {stage!r} needs trained models for loss family {family!r}; "
            f"run the train stage with that loss first"
        )
    return paths


def _eval_inputs(cfg, out):
    ins = [
        ("test split", out / "test.jsonl", "split"),
        ("segmentation", out / "segmentation.tsv", "segment"),
        ("frequency table", out / "frequency_table.csv", "threshold"),
    ]
    producer = f"train:{cfg.loss}"
    for path in _family_model_paths(out, cfg.loss, "eval"):
        ins.append((f"model {path.name}", path, producer))
    return ins


def _evaluate_family(out, family: str, test_ds, seg, table) -> metrics.MetricsReport:
    models = [trainer.load_model(p) for p in _family_model_paths(out, family, "eval")]
    if any(rec.features is None for rec in test_ds.records):
        raise PipelineError("evaluation needs feature vectors on every record")
    X = np.stack([np.asarray(rec.features, dtype=np.float64) for rec in test_ds.records])
    preds = trainer.predict_batch(models, X)
    labels = [{table.rank_of[c] for c in rec.codes} for rec in test_ds.records]
    return metrics.segmentwise_report(preds, labels, seg)


def _run_eval(cfg, out):
    family = cfg.loss
    test_ds, _ = corpus.load_dataset(out / "test.jsonl")
    table = corpus.read_frequency_table(out / "frequency_table.csv")
    seg = segmenter.read_segmentation(out / "segmentation.tsv")
    report = _evaluate_family(out, family, test_ds, seg, table)
    class_names = {rank: cid for cid, rank in table.rank_of.items()}
    csv_path = out / f"metrics_{family}.csv"
    txt_path = out / f"metrics_{family}.txt"
    fig_path = out / f"segment_f1_{family}.png"
    metrics.write_report_csv(report, csv_path, class_names)
    txt_path.write_text(metrics.render_report_text(report, class_names), encoding="utf-8")
    columns = ["Total"] + [name for name, _ in report.per_segment]
    values = [report.total_micro_f1] + [f1 for _, f1 in report.per_segment]
    plots.save_segment_f1_bars(columns, {family: values}, fig_path)
    log.info("eval[%s]: total micro F1 %.4f", family, report.total_micro_f1)
    return [csv_path, txt_path, fig_path]


_STAGE_DEFS = {
    "ingest": StageDef(
        name="ingest",
        entry_key=lambda cfg: "ingest",
        config_keys=("dataset", "section_headers", "abbreviations", "max_len"),
        inputs=_ingest_inputs,
        run=_run_ingest,
    ),
    "clean": StageDef(
        name="clean",
        entry_key=lambda cfg: "clean",
        config_keys=("embeddings_manifest", "clean_threshold"),
        inputs=_clean_inputs,
        run=_run_clean,
    ),
    "threshold": StageDef(
        name="threshold",
        entry_key=lambda cfg: "threshold",
        config_keys=("min_count",),
        inputs=lambda cfg, out: [("cleaned dataset", out / "cleaned.jsonl", "clean")],
        run=_run_threshold,
    ),
    "segment": StageDef(
        name="segment",
        entry_key=lambda cfg: "segment",
        config_keys=("eta",),
        inputs=lambda cfg, out: [
            ("thresholded dataset", out / "thresholded.jsonl", "threshold"),
            ("frequency table", out / "frequency_table.csv", "threshold"),
        ],
        run=_run_segment,
    ),
    "split": StageDef(
        name="split",
        entry_key=lambda cfg: "split",
        config_keys=("split_ratios", "seed"),
        inputs=lambda cfg, out: [("thresholded dataset", out / "thresholded.jsonl", "threshold")],
        run=_run_split,
    ),
    "train": StageDef(
        name="train",
        entry_key=lambda cfg: f"train:{cfg.loss}",
        config_keys=(
            "loss",
            "gamma",
            "cb_beta",
            "epsilon",
            "sh_on_positives",
            "learning_rate",
            "batch_size",
            "max_steps",
            "weight_decay",
            "hidden_dim",
            "decision_threshold",
            "seed",
        ),
        inputs=_train_inputs,
        run=_run_train,
    ),
    "eval": StageDef(
        name="eval",
        entry_key=lambda cfg: f"eval:{cfg.loss}",
        config_keys=("loss", "decision_threshold"),
        inputs=_eval_inputs,
        run=_run_eval,
    ),
}


def _check_inputs(stage: StageDef, manifest: Manifest, inputs, out: Path):
    hashes = {}
    for logical, path, producer in inputs:
        path = Path(path)
        if not path.exists():
            if producer:
                raise MissingPrerequisiteError(
                    f"stage {stage.name!r} needs {logical} produced by stage {producer!r}; "
                    f"run that stage first"
                )
            raise MissingPrerequisiteError(f"stage {stage.name!r} input {path} does not exist")
        actual = _sha256_file(path)
        if producer:
            rel = str(path.relative_to(out))
            recorded = manifest.output_hash(producer, rel)
            if recorded is None:
                raise MissingPrerequisiteError(
                    f"stage {stage.name!r} found {rel} but stage {producer!r} never recorded it; "
                    f"run that stage first"
                )
            if recorded != actual:
                raise StaleArtifactError(
                    f"{rel} does not match the hash recorded by stage {producer!r}; "
                    f"re-run {producer!r} before {stage.name!r}"
                )
        hashes[logical] = actual
    return hashes


def _outputs_intact(manifest: Manifest, entry: dict, out: Path) -> bool:
    for rel, sha in entry.get("outputs", {}).items():
        path = out / rel
        if not path.exists() or _sha256_file(path) != sha:
            return False
    return True


def run_pipeline(config: RunConfig, stages=None) -> list:
    """Run the requested stages in order; returns (stage, "ran" | "skipped") pairs.

    Errors raise; the command-line wrapper turns any raised stage error into
    a nonzero exit status.
    """
    if stages is None:
        requested = list(STAGES)
    else:
        requested = [str(s).lower() for s in stages]
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise PipelineError(f"unknown stages {unknown}; expected a subset of {list(STAGES)}")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out)
    results = []
    for name in STAGES:
        if name not in requested:
            continue
        stage = _STAGE_DEFS[name]
        inputs = stage.inputs(config, out)
        input_hashes = _check_inputs(stage, manifest, inputs, out)
        subset = _config_subset(config, stage.config_keys)
        key = stage.entry_key(config)
        entry = manifest.entry(key)
        if (
            entry is not None
            and entry.get("config") == subset
            and entry.get("inputs") == input_hashes
            and _outputs_intact(manifest, entry, out)
        ):
            log.info("%s: skipped (up to date)", name)
            results.append((name, "skipped"))
            continue
        produced = stage.run(config, out)
        manifest.record(key, subset, input_hashes, produced)
        results.append((name, "ran"))
    return results


def compare_losses(config: RunConfig, families=None) -> list:
    """Evaluate trained families on the test split and write the comparison.

    Returns (family, report) pairs ordered as requested.  Every family must
    already have trained models in the run directory.
    """
    families = [str(f).lower() for f in (families or config.compare_families)]
    if not families:
        raise PipelineError("no loss families to compare")
    unknown = [f for f in families if f not in FAMILIES]
    if unknown:
        raise PipelineError(f"unknown loss families {unknown}; expected a subset of {list(FAMILIES)}")
    out = Path(config.out)
    for logical, rel in (("test split", "test.jsonl"), ("segmentation", "segmentation.tsv"), ("frequency table", "frequency_table.csv")):
        if not (out / rel).exists():
            raise MissingPrerequisiteError(f"compare needs {logical} ({rel}); run the pipeline first")
    test_ds, _ = corpus.load_dataset(out / "test.jsonl")
    table = corpus.read_frequency_table(out / "frequency_table.csv")
    seg = segmenter.read_segmentation(out / "segmentation.tsv")
    rows = []
    for family in families:
        report = _evaluate_family(out, family, test_ds, seg, table)
        rows.append((family, report))

    columns = ["Total"] + metrics.segment_names(seg.num_segments)
    csv_lines = ["family," + ",".join(columns)]
    text_widths = [max(8, len(c) + 2) for c in columns]
    text_lines = ["family".ljust(10) + "".join(c.rjust(w) for c, w in zip(columns, text_widths))]
    bar_rows = {}
    for family, report in rows:
        values = [report.total_micro_f1] + [f1 for _, f1 in report.per_segment]
        csv_lines.append(f"{family}," + ",".join(repr(v) for v in values))
        text_lines.append(
            family.ljust(10) + "".join(f"{v:.4f}".rjust(w) for v, w in zip(values, text_widths))
        )
        bar_rows[family] = values
    (out / "compare.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    (out / "compare.txt").write_text("\n".join(text_lines) + "\n", encoding="utf-8")
    plots.save_segment_f1_bars(columns, bar_rows, out / "compare.png")
    log.info("compare: wrote %s", out / "compare.csv")
    return rows
