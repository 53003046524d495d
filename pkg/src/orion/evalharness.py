"""Double-blind human evaluation: blinded assignments, composite scores, reports.

Scores are collected per evaluator against anonymous labels (Model A..D); the
true model names enter only at aggregation time, via the assignment file. A
small benchmark runner drives the live service over a fixed item set with
per-item graders.
"""
from __future__ import annotations

import csv
import json
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from orion.errors import OrionError

LABELS = ("A", "B", "C", "D")


class OutOfRange(OrionError):
    """A component score falls outside the 0-10 scale."""


class TooFewEvaluators(OrionError):
    """Blinded assignment needs at least three evaluators."""


class TooManyModels(OrionError):
    """Only four anonymous labels exist, so at most four models compare."""


class UnknownLabel(OrionError):
    """A score row references a label with no assignment to unblind it."""


# -- score sheets -----------------------------------------------------------


@dataclass(frozen=True)
class CompositeWeights:
    helpfulness: float = 0.30
    correctness: float = 0.35
    presentation: float = 0.20
    instruction_following: float = 0.15

    def __post_init__(self) -> None:
        total = self.helpfulness + self.correctness + self.presentation + self.instruction_following
        if abs(total - 1.0) > 1e-9:
            raise OutOfRange(f"weights sum to {total}, expected 1.0")


DEFAULT_WEIGHTS = CompositeWeights()


def _check_score(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 10.0:
        raise OutOfRange(f"{name}={value} outside [0, 10]")
    return value


@dataclass(frozen=True)
class ScoreSheet:
    """One evaluator's component scores for one output. presentation=None means
    the dimension did not apply (nothing visual to judge)."""

    helpfulness: float
    correctness: float
    presentation: Optional[float]
    instruction_following: float

    def __post_init__(self) -> None:
        _check_score("helpfulness", self.helpfulness)
        _check_score("correctness", self.correctness)
        if self.presentation is not None:
            _check_score("presentation", self.presentation)
        _check_score("instruction_following", self.instruction_following)


def composite(sheet: ScoreSheet, weights: CompositeWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted 0-10 aggregate; with presentation n/a the remaining weights are
    renormalized so the result stays on the same scale."""
    partial = (
        weights.helpfulness * sheet.helpfulness
        + weights.correctness * sheet.correctness
        + weights.instruction_following * sheet.instruction_following
    )
    if sheet.presentation is None:
        return partial / (1.0 - weights.presentation)
    return partial + weights.presentation * sheet.presentation


# -- blinded assignment -----------------------------------------------------


@dataclass(frozen=True)
class Assignment:
    """The label each model wears for one (task, evaluator) pair, plus the
    order the outputs are shown in."""

    task_id: str
    evaluator_id: str
    label_perm: Mapping[str, str]  # model name -> label
    order: tuple[str, ...]  # labels in presentation order
    seed: int

    def model_for(self, label: str) -> str:
        for model, assigned in self.label_perm.items():
            if assigned == label:
                return model
        raise UnknownLabel(f"label {label!r} not in assignment for {self.task_id}/{self.evaluator_id}")

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "evaluator_id": self.evaluator_id,
            "label_perm": dict(sorted(self.label_perm.items())),
            "order": list(self.order),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "Assignment":
        return cls(
            task_id=d["task_id"],
            evaluator_id=d["evaluator_id"],
            label_perm=dict(d["label_perm"]),
            order=tuple(d["order"]),
            seed=int(d["seed"]),
        )


def assign_blind(
    tasks: Sequence[str],
    models: Sequence[str],
    evaluators: Sequence[str],
    seed: int,
) -> list[Assignment]:
    """Independent label and presentation-order draws per (task, evaluator),
    deterministic under the seed regardless of call order."""
    if len(models) > len(LABELS):
        raise TooManyModels(f"{len(models)} models but only labels {''.join(LABELS)}")
    if len(evaluators) < 3:
        raise TooFewEvaluators(f"{len(evaluators)} evaluators, need at least 3")
    labels = LABELS[: len(models)]
    out = []
    for task_id in tasks:
        for evaluator_id in evaluators:
            rng = random.Random(f"{seed}/{task_id}/{evaluator_id}")
            shuffled = list(labels)
            rng.shuffle(shuffled)
            order = list(labels)
            rng.shuffle(order)
            out.append(
                Assignment(
                    task_id=task_id,
                    evaluator_id=evaluator_id,
                    label_perm=dict(zip(models, shuffled)),
                    order=tuple(order),
                    seed=seed,
                )
            )
    return out


def assignments_to_json(assignments: Sequence[Assignment]) -> str:
    return json.dumps([a.to_json() for a in assignments], indent=1, sort_keys=True)


def assignments_from_json(text: str) -> list[Assignment]:
    return [Assignment.from_json(d) for d in json.loads(text)]


# -- score ingest (blinded) -------------------------------------------------


@dataclass(frozen=True)
class ScoreRecord:
    """One ingested row: still blinded — the model is known only as a label."""

    task_id: str
    evaluator_id: str
    label: str
    sheet: ScoreSheet


# Main-text component names are canonical; the appendix protocol names the
# same four dimensions differently (same weights), so both headers ingest.
_COLUMN_ALIASES = {
    "task_id": "task_id",
    "evaluator_id": "evaluator_id",
    "label": "label",
    "h": "h",
    "helpfulness": "h",
    "task_completion": "h",
    "c": "c",
    "correctness": "c",
    "output_accuracy": "c",
    "p": "p",
    "presentation": "p",
    "visual_quality": "p",
    "i": "i",
    "instruction_following": "i",
    "task_appropriateness": "i",
}


def read_scores_csv(lines: Iterable[str]) -> list[ScoreRecord]:
    """Rows of task_id, evaluator_id, label, h, c, p, i (blank p = n/a).
    Never sees true model names — unblinding is aggregate()'s job."""
    reader = csv.DictReader(lines)
    records = []
    for raw in reader:
        row: dict[str, str] = {}
        for key, value in raw.items():
            if key is None:
                continue
            canon = _COLUMN_ALIASES.get(key.strip().casefold().replace(" ", "_"))
            if canon is not None:
                row[canon] = (value or "").strip()
        missing = {"task_id", "evaluator_id", "label", "h", "c", "i"} - set(row)
        if missing:
            raise OrionError(f"score row missing columns: {sorted(missing)}")
        sheet = ScoreSheet(
            helpfulness=float(row["h"]),
            correctness=float(row["c"]),
            presentation=float(row["p"]) if row.get("p") else None,
            instruction_following=float(row["i"]),
        )
        records.append(
            ScoreRecord(
                task_id=row["task_id"],
                evaluator_id=row["evaluator_id"],
                label=row["label"],
                sheet=sheet,
            )
        )
    return records


# -- disagreement and aggregation -------------------------------------------

DISAGREEMENT_SPREAD_PP = 20.0


def flag_disagreement(task_id: str, model: str, sheets: Sequence[ScoreSheet]) -> bool:
    """True when the evaluators' composites, on the 0-100 scale, spread more
    than 20 points (strictly)."""
    if len(sheets) < 2:
        raise ValueError(f"disagreement over {task_id}/{model} needs at least two sheets")
    percents = [composite(s) * 10.0 for s in sheets]
    return (max(percents) - min(percents)) > DISAGREEMENT_SPREAD_PP


@dataclass
class Report:
    per_task: dict  # model -> task_id -> mean composite
    per_category: dict  # model -> category -> mean of task means
    overall: dict  # model -> mean of task means
    flags: list  # [{"task_id", "model", "spread_pp"}]
    evaluator_counts: dict = field(default_factory=dict)  # task_id -> evaluators seen

    def to_json(self) -> dict:
        return {
            "per_task": self.per_task,
            "per_category": self.per_category,
            "overall": self.overall,
            "flags": self.flags,
            "evaluator_counts": self.evaluator_counts,
        }

    def to_markdown(self) -> str:
        models = sorted(self.overall)
        categories = sorted({c for by_cat in self.per_category.values() for c in by_cat})
        lines = ["| model | " + " | ".join(categories) + " | overall |"]
        lines.append("|" + " --- |" * (len(categories) + 2))
        for model in models:
            cells = [f"{self.per_category[model].get(c, float('nan')):.2f}" for c in categories]
            lines.append(
                f"| {model} | " + " | ".join(cells) + f" | {self.overall[model]:.2f} |"
            )
        if self.flags:
            lines.append("")
            lines.append("Flagged for review (composite spread > 20 pp):")
            for f in self.flags:
                lines.append(f"- {f['task_id']} / {f['model']}: {f['spread_pp']:.1f} pp")
        return "\n".join(lines)


def aggregate(
    records: Sequence[ScoreRecord],
    assignments: Sequence[Assignment],
    task_categories: Optional[Mapping[str, str]] = None,
    weights: CompositeWeights = DEFAULT_WEIGHTS,
) -> Report:
    """Unblind via the assignment file, then mean composites per task, per
    category, and overall, flagging high-disagreement (task, model) pairs."""
    by_pair = {(a.task_id, a.evaluator_id): a for a in assignments}
    sheets: dict[tuple[str, str], list[ScoreSheet]] = {}
    evaluators: dict[str, set[str]] = {}
    for rec in records:
        assignment = by_pair.get((rec.task_id, rec.evaluator_id))
        if assignment is None:
            raise UnknownLabel(f"no assignment for {rec.task_id}/{rec.evaluator_id}")
        model = assignment.model_for(rec.label)
        sheets.setdefault((rec.task_id, model), []).append(rec.sheet)
        evaluators.setdefault(rec.task_id, set()).add(rec.evaluator_id)

    per_task: dict[str, dict[str, float]] = {}
    flags = []
    for (task_id, model), group in sorted(sheets.items()):
        mean = statistics.fmean(composite(s, weights) for s in group)
        per_task.setdefault(model, {})[task_id] = mean
        if len(group) >= 2 and flag_disagreement(task_id, model, group):
            percents = [composite(s, weights) * 10.0 for s in group]
            flags.append(
                {"task_id": task_id, "model": model, "spread_pp": max(percents) - min(percents)}
            )

    categories = task_categories or {}
    per_category: dict[str, dict[str, float]] = {}
    overall: dict[str, float] = {}
    for model, by_task in per_task.items():
        cat_values: dict[str, list[float]] = {}
        for task_id, value in by_task.items():
            cat_values.setdefault(categories.get(task_id, "uncategorized"), []).append(value)
        per_category[model] = {c: statistics.fmean(v) for c, v in cat_values.items()}
        overall[model] = statistics.fmean(by_task.values())

    return Report(
        per_task=per_task,
        per_category=per_category,
        overall=overall,
        flags=flags,
        evaluator_counts={t: len(e) for t, e in sorted(evaluators.items())},
    )


# -- benchmark runner -------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    prompt: str
    files: tuple[Path, ...]
    grade: Callable[[str], bool]


@dataclass
class BenchmarkRun:
    results: list  # [{"item_id", "ok", "answer"| "error"}]

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def correct(self) -> int:
        return sum(1 for r in self.results if r.get("ok"))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.results else 0.0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "results": self.results,
        }


def http_endpoint(base_url: str, api_key: Optional[str] = None) -> Callable[[str, Sequence[Path]], str]:
    """Adapter that uploads each item's files and asks the chat endpoint."""
    import httpx

    headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def ask(prompt: str, files: Sequence[Path]) -> str:
        with httpx.Client(base_url=base_url, headers=headers, timeout=60.0) as client:
            parts: list[dict] = [{"type": "text", "text": prompt}]
            for path in files:
                resp = client.post(
                    "/v1/files",
                    files={"file": (path.name, path.read_bytes(), "application/json")},
                )
                resp.raise_for_status()
                parts.append({"type": "input_file", "file_id": resp.json()["id"]})
            resp = client.post(
                "/v1/agent/completions",
                json={
                    "model": "orion/agent:fast",
                    "messages": [{"role": "user", "content": parts}],
                },
            )
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]

    return ask


def run_benchmark(
    adapter: Iterable[BenchmarkItem],
    endpoint: Callable[[str, Sequence[Path]], str] | str,
    concurrency: int = 4,
) -> BenchmarkRun:
    """Grade every item against the service; endpoint failures become per-item
    error records rather than aborting the run."""
    ask = http_endpoint(endpoint) if isinstance(endpoint, str) else endpoint
    items = list(adapter)

    def run_one(item: BenchmarkItem) -> dict:
        try:
            answer = ask(item.prompt, item.files)
        except Exception as exc:
            return {"item_id": item.item_id, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
        return {"item_id": item.item_id, "ok": bool(item.grade(answer)), "answer": answer}

    if not items:
        return BenchmarkRun(results=[])
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        results = list(pool.map(run_one, items))
    return BenchmarkRun(results=results)


def _contains(*needles: str) -> Callable[[str], bool]:
    return lambda answer: all(n in answer for n in needles)


def toy_benchmark(fixtures_dir: Optional[Path] = None) -> list[BenchmarkItem]:
    """Ten tasks over the bundled fixtures, each solvable by the rule planner."""
    if fixtures_dir is None:
        from importlib import resources

        fixtures_dir = Path(str(resources.files("orion").joinpath("data", "fixtures")))
    scene = fixtures_dir / "street.scene.json"
    doc = fixtures_dir / "form.doc.json"
    video = fixtures_dir / "fireworks.video.json"
    return [
        BenchmarkItem("caption-street", "What is in this image?", (scene,), _contains("car")),
        BenchmarkItem(
            "clock-read",
            "Crop into the clock in the image and extract the time shown.",
            (scene,),
            _contains("10:09"),
        ),
        BenchmarkItem(
            "detect-signal",
            "Find the traffic light in the image",
            (scene,),
            _contains("traffic light"),
        ),
        BenchmarkItem("count-cars", "Count the car in this image", (scene,), _contains("Count: 1")),
        BenchmarkItem(
            "ocr-street", "Read the text in the image", (scene,), _contains("MAIN ST")
        ),
        BenchmarkItem(
            "form-fields",
            "Extract the fields from this form",
            (doc,),
            _contains("policy_number: PN-4471", "applicant_name: John Miller"),
        ),
        BenchmarkItem(
            "page-lookup",
            "Which pages mention windscreen glass breakage?",
            (doc,),
            _contains("2"),
        ),
        BenchmarkItem(
            "video-summary",
            "Summarize this video",
            (video,),
            _contains("00:23 to 00:28"),
        ),
        BenchmarkItem(
            "finale-when",
            "When does the fireworks finale happen in this video?",
            (video,),
            lambda a: a.strip() == "00:23 to 00:28",
        ),
        BenchmarkItem(
            "highlights",
            "Extract the top 2 highlights from this video",
            (video,),
            _contains("00:23 to 00:28", "/v1/artifacts/"),
        ),
    ]
