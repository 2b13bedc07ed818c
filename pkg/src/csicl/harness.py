"""Sequential-training protocol, benchmark suite, metrics, and result export.

One run walks K periods: generate-or-load the period's domain dataset, train
the discriminator under the selected method variant, evaluate on every domain
seen so far, update the variant's retained knowledge (distilled core-set,
importance vector, or the raw union for the cumulative baseline), then discard
the raw dataset.  Domain data is cached on disk per trial so every variant of
a trial trains on identical datasets; the method variants differ only through
their own seeded rng streams.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import coreset as cs
from . import model as m
from . import persist
from . import preprocess as pp
from . import sim
from . import train as tr


class ConfigError(ValueError):
    """Malformed experiment or scene configuration."""


DEFAULT_VARIANTS = ("proposed", "er_kmeans", "er_herding", "bl_ft", "bl_cumulative")


@dataclass
class ExperimentConfig:
    n_domains: int = 4
    n_per_class: int = 30
    n_trials: int = 5
    base_seed: int = 0
    variants: tuple[str, ...] = DEFAULT_VARIANTS
    scene: dict = field(default_factory=dict)        # desk_scene keyword overrides
    train: tr.TrainConfig = field(default_factory=tr.TrainConfig)
    n_classes: int = sim.N_ACTIVITY_CLASSES
    temporal_width: int = pp.DEFAULT_TEMPORAL_WIDTH
    mlp_widths: tuple[int, int] = (128, 64)
    feature_width: int = 64
    n_heads: int = 8
    n_blocks: int = 2
    dropout_rate: float = 0.1
    exemplars_per_class: int = 10
    clustering_ratio: float = 0.9
    distill_eta: float = 2.0
    importance_samples: int = 64
    herding_form: str = "mean"
    held_out_fraction: float = 0.0
    dtype: str = "float32"
    workdir: str = "runs"

    def __post_init__(self):
        if self.n_domains < 1 or self.n_trials < 1:
            raise ConfigError("need at least one domain and one trial")
        unknown = set(self.variants) - set(tr.VARIANTS)
        if unknown:
            raise ConfigError(f"unknown variants: {sorted(unknown)}")
        if not 0.0 <= self.held_out_fraction < 1.0:
            raise ConfigError("held_out_fraction must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be 'float32' or 'float64'")
        if self.distill_eta < 1.0:
            raise ConfigError("distill_eta must be >= 1")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def build_scene(self) -> sim.SceneConfig:
        try:
            return sim.desk_scene(**self.scene)
        except TypeError as exc:
            raise ConfigError(f"bad scene overrides: {exc}") from exc

    def layout(self) -> pp.LinkLayout:
        scene = self.build_scene()
        return pp.LinkLayout(scene.n_subcarriers, scene.n_tx, scene.n_rx)

    def model_config(self) -> m.ModelConfig:
        return m.ModelConfig(
            input_width=pp.output_width(self.layout(), self.temporal_width),
            mlp_widths=tuple(self.mlp_widths),
            feature_width=self.feature_width,
            n_heads=self.n_heads,
            n_blocks=self.n_blocks,
            n_classes=self.n_classes,
            dropout_rate=self.dropout_rate,
        )


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of small integers."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def _variant_index(variant: str) -> int:
    return tr.VARIANTS.index(variant)


# ---------------------------------------------------------------------------
# domain data store
# ---------------------------------------------------------------------------

def domain_directory(cfg: ExperimentConfig, trial: int, period: int) -> str:
    return os.path.join(cfg.workdir, "domains", f"trial{trial:02d}", f"domain{period:02d}")


def ensure_domain(cfg: ExperimentConfig, trial: int, period: int) -> str:
    """Generate (once) and persist the period's dataset; shared by all variants."""
    directory = domain_directory(cfg, trial, period)
    if os.path.exists(os.path.join(directory, "manifest.json")):
        return directory
    scene = cfg.build_scene()
    profile = sim.build_user_profile(
        user_id=period, seed=derive_seed(cfg.base_seed, trial),
        n_classes=cfg.n_classes, duration=scene.duration)
    data_seed = derive_seed(cfg.base_seed, trial, period)
    dataset = sim.generate_domain(scene, profile, cfg.n_per_class, data_seed)
    persist.save_domain(dataset, directory, seed=data_seed, scene=scene)
    return directory


def _load_arrays(cfg: ExperimentConfig, directory: str):
    """Load a persisted domain and preprocess it: (X list, targets, class ids)."""
    dataset = persist.load_domain(directory)
    scene = cfg.build_scene()
    layout = cfg.layout()
    xs, targets = pp.preprocess_domain(dataset.entries, layout, scene.duration,
                                       cfg.temporal_width)
    xs = [x.astype(cfg.np_dtype) for x in xs]
    class_ids = np.array([seq.label for seq, _ in dataset.entries])
    return dataset, xs, targets, class_ids


def _split_held_out(cfg: ExperimentConfig, trial: int, period: int, n: int):
    """Stratification-free seeded split; returns (train_idx, eval_idx)."""
    rng = np.random.default_rng(derive_seed(cfg.base_seed, trial, period, 0x5EED))
    order = rng.permutation(n)
    n_eval = int(round(cfg.held_out_fraction * n))
    return np.sort(order[n_eval:]), np.sort(order[:n_eval])


# ---------------------------------------------------------------------------
# evaluation and metrics
# ---------------------------------------------------------------------------

def evaluate(params: m.ModelParams, xs: list[np.ndarray], targets: np.ndarray) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to the lowest class."""
    if len(xs) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = m.predict_proba(params, xs)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(targets).argmax(axis=1)))


@dataclass
class Metrics:
    average_accuracy: float
    forgetting: float
    curves: dict[int, list[tuple[int, float]]]


def compute_metrics(matrix: np.ndarray) -> Metrics:
    """Average final-period accuracy, mean forgetting, and per-domain curves.

    matrix[k', k] is the accuracy on domain k+1 after training period k'+1,
    defined for k <= k'; forgetting averages (just-learned minus final)
    accuracy over all but the last domain.
    """
    k_total = matrix.shape[0]
    lower = np.tril_indices(k_total)
    if matrix.shape[0] != matrix.shape[1] or np.any(~np.isfinite(matrix[lower])):
        raise ValueError("accuracy matrix is incomplete")
    final = matrix[k_total - 1]
    average = float(final.mean())
    if k_total == 1:
        forgetting = 0.0
    else:
        drops = [matrix[k, k] - final[k] for k in range(k_total - 1)]
        forgetting = float(np.mean(drops))
    curves = {k + 1: [(kp + 1, float(matrix[kp, k])) for kp in range(k, k_total)]
              for k in range(k_total)}
    return Metrics(average, forgetting, curves)


# ---------------------------------------------------------------------------
# one sequential run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    variant: str
    trial: int
    matrix: np.ndarray
    metrics: Metrics
    params: m.ModelParams
    knowledge: cs.KnowledgeCoreSet | None
    inventory_history: list[list[int]]     # raw datasets retained after each period
    trace_path: str | None = None


def _select_indices(cfg: ExperimentConfig, variant: str, feats: np.ndarray,
                    rng: np.random.Generator) -> list[int]:
    budget = cfg.exemplars_per_class
    if variant == "bl_er_rand":
        return [int(i) for i in rng.choice(len(feats), size=budget, replace=False)]
    beta = {"er_kmeans": 1.0, "er_herding": 0.0}.get(variant, cfg.clustering_ratio)
    return cs.select_exemplars(feats, budget, beta, rng, herding_form=cfg.herding_form)


def run_sequential(cfg: ExperimentConfig, variant: str, trial: int,
                   write_artifacts: bool = True) -> RunResult:
    """Execute the K-period sequential protocol for one (variant, trial)."""
    if variant not in tr.VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    scene = cfg.build_scene()
    model_cfg = cfg.model_config()
    dtype = cfg.np_dtype
    params = m.init_params(model_cfg, derive_seed(cfg.base_seed, trial, 0xB00), dtype)
    v_idx = _variant_index(variant)
    select_rng = np.random.default_rng(derive_seed(cfg.base_seed, trial, v_idx, 0x5E7))

    knowledge = cs.KnowledgeCoreSet(cfg.exemplars_per_class, cfg.distill_eta)
    replay_xs: list[np.ndarray] = []
    replay_targets: list[np.ndarray] = []
    union_xs: list[np.ndarray] = []
    union_targets: list[np.ndarray] = []
    retained_union: list[int] = []
    inventory_history: list[list[int]] = []

    run_dir = os.path.join(cfg.workdir, "artifacts", variant, f"trial{trial:02d}")
    trace_path = os.path.join(run_dir, "trace.csv") if write_artifacts else None
    if trace_path and os.path.exists(trace_path):
        os.unlink(trace_path)

    k_total = cfg.n_domains
    matrix = np.full((k_total, k_total), np.nan)

    try:
        params = _run_periods(cfg, variant, trial, params, matrix, knowledge,
                              replay_xs, replay_targets, union_xs, union_targets,
                              retained_union, inventory_history, select_rng,
                              trace_path, run_dir, write_artifacts)
    except Exception:
        # flush whatever accumulated before surfacing the failure
        if write_artifacts:
            rows = ["period," + ",".join(f"domain_{k + 1}" for k in range(k_total))]
            for kp in range(k_total):
                cells = ["" if not np.isfinite(matrix[kp][k])
                         else repr(float(matrix[kp][k])) for k in range(k_total)]
                rows.append(f"{kp + 1}," + ",".join(cells))
            persist.atomic_write_text(os.path.join(run_dir, "partial_matrix.csv"),
                                      "\n".join(rows) + "\n")
        raise

    if write_artifacts:
        persist.save_model(params, os.path.join(run_dir, "model"))
    metrics = compute_metrics(matrix)
    return RunResult(variant=variant, trial=trial, matrix=matrix, metrics=metrics,
                     params=params, knowledge=knowledge if knowledge.entries else None,
                     inventory_history=inventory_history, trace_path=trace_path)


def _run_periods(cfg, variant, trial, params, matrix, knowledge, replay_xs,
                 replay_targets, union_xs, union_targets, retained_union,
                 inventory_history, select_rng, trace_path, run_dir,
                 write_artifacts) -> m.ModelParams:
    dtype = cfg.np_dtype
    v_idx = _variant_index(variant)
    importance: tr.ImportanceVector | None = None
    k_total = cfg.n_domains

    for period in range(1, k_total + 1):
        directory = ensure_domain(cfg, trial, period)
        _, xs, targets, class_ids = _load_arrays(cfg, directory)
        train_idx = np.arange(len(xs))
        if cfg.held_out_fraction > 0:
            train_idx, _ = _split_held_out(cfg, trial, period, len(xs))
        cur_xs = [xs[i] for i in train_idx]
        cur_targets = targets[train_idx]

        if variant == "bl_cumulative":
            union_xs.extend(cur_xs)
            union_targets.extend(cur_targets)
            retained_union.append(period)
            data = tr.BatchData.from_sequences(union_xs, np.array(union_targets), dtype)
        else:
            data = tr.BatchData.from_sequences(cur_xs, cur_targets, dtype)

        replay_pool = None
        if variant in tr.REPLAY_VARIANTS and replay_xs:
            replay_pool = tr.BatchData.from_sequences(replay_xs, np.array(replay_targets),
                                                      dtype)
        train_cfg = tr.variant_train_config(cfg.train, variant, period)
        train_cfg = dataclasses.replace(
            train_cfg, seed=derive_seed(cfg.base_seed, trial, v_idx, period))
        eta = cfg.distill_eta if variant in tr.DISTILLED_VARIANTS else 1.0
        params, trace = tr.train_epochs(
            params, data, train_cfg, replay_pool=replay_pool, eta=eta,
            importance=importance if variant in tr.PR_VARIANTS else None)
        if trace_path:
            tr.write_trace(trace_path, trace)

        # evaluate on every domain seen so far, loading each from disk
        for past in range(1, period + 1):
            p_dir = domain_directory(cfg, trial, past)
            _, p_xs, p_targets, _ = _load_arrays(cfg, p_dir)
            if cfg.held_out_fraction > 0:
                _, eval_idx = _split_held_out(cfg, trial, past, len(p_xs))
                p_xs = [p_xs[i] for i in eval_idx]
                p_targets = p_targets[eval_idx]
            matrix[period - 1, past - 1] = evaluate(params, p_xs, p_targets)

        # knowledge update
        if variant in tr.REPLAY_VARIANTS:
            feature_set = cs.build_feature_set(params, cur_xs, class_ids[train_idx])
            new_entries = []
            dataset = persist.load_domain(directory)
            for c in feature_set.classes:
                feats, local_idx = feature_set.per_class[c]
                picks = _select_indices(cfg, variant, feats, select_rng)
                chosen = [int(train_idx[local_idx[p]]) for p in picks]
                chosen_xs = [xs[i] for i in chosen]
                if variant in tr.DISTILLED_VARIANTS:
                    labels = cs.distill_labels(params, chosen_xs, cfg.distill_eta)
                else:
                    labels = targets[chosen]
                labels = np.asarray(labels, dtype=float)
                for i, lab in zip(chosen, labels):
                    seq, _ = dataset.entries[i]
                    new_entries.append(cs.CoreSetEntry(seq, lab, domain_id=period,
                                                       class_id=c))
                replay_xs.extend(chosen_xs)
                replay_targets.extend(labels)
            cs.update_knowledge(knowledge, period, new_entries)
            if write_artifacts:
                persist.save_coreset(knowledge, os.path.join(run_dir, "coreset"))
        elif variant in tr.PR_VARIANTS:
            method = "ewc" if variant == "pr_ewc" else "mas"
            n_est = min(cfg.importance_samples, len(cur_xs))
            new_imp = tr.estimate_importance(params, cur_xs, cur_targets, method, n_est)
            if importance is None:
                importance = new_imp
            else:
                # accumulate importance, re-anchor at the latest optimum
                importance = tr.ImportanceVector(importance.weights + new_imp.weights,
                                                 new_imp.anchor)

        # discard the raw period dataset (the cumulative baseline retains by design)
        del xs, cur_xs, targets, data
        inventory_history.append(list(retained_union))

    return params


# ---------------------------------------------------------------------------
# benchmark suite
# ---------------------------------------------------------------------------

def worker_count(n_jobs: int) -> int:
    env = os.environ.get("EDGECL_THREADS", "")
    if env.strip():
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError("EDGECL_THREADS must be an integer") from exc
        if cap < 1:
            raise ConfigError("EDGECL_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def _run_job(args):
    cfg, variant, trial = args
    result = run_sequential(cfg, variant, trial)
    return variant, trial, result.matrix, result.metrics


def run_benchmark_suite(cfg: ExperimentConfig, variants=None, trials=None) -> dict:
    """All (variant, trial) runs with per-variant failure isolation."""
    variants = tuple(variants) if variants is not None else tuple(cfg.variants)
    trials = list(trials) if trials is not None else list(range(cfg.n_trials))
    jobs = [(cfg, v, t) for v in variants for t in trials]
    workers = worker_count(len(jobs))
    outcomes: dict[tuple[str, int], tuple] = {}
    errors: dict[str, str] = {}
    if workers > 1:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = {pool.submit(_run_job, job): job for job in jobs}
            for fut, job in futures.items():
                _, variant, trial = job
                try:
                    v, t, matrix, metrics = fut.result()
                    outcomes[(v, t)] = (matrix, metrics)
                except Exception as exc:   # noqa: BLE001 - isolate variant failures
                    errors[variant] = f"trial {trial}: {exc}"
    else:
        for job in jobs:
            _, variant, trial = job
            try:
                v, t, matrix, metrics = _run_job(job)
                outcomes[(v, t)] = (matrix, metrics)
            except Exception as exc:   # noqa: BLE001
                errors[variant] = f"trial {trial}: {exc}"
    return assemble_bundle(cfg, variants, trials, outcomes, errors)


def _matrix_to_jsonable(matrix: np.ndarray):
    return [[(float(v) if np.isfinite(v) else None) for v in row] for row in matrix]


def assemble_bundle(cfg: ExperimentConfig, variants, trials, outcomes, errors) -> dict:
    bundle_variants = {}
    for variant in variants:
        if variant in errors:
            bundle_variants[variant] = {"error": errors[variant], "trials": []}
            continue
        rows = []
        for trial in trials:
            matrix, metrics = outcomes[(variant, trial)]
            rows.append({
                "trial": trial,
                "matrix": _matrix_to_jsonable(matrix),
                "average_accuracy": metrics.average_accuracy,
                "forgetting": metrics.forgetting,
            })
        avg = np.array([r["average_accuracy"] for r in rows])
        forg = np.array([r["forgetting"] for r in rows])
        bundle_variants[variant] = {
            "error": None,
            "trials": rows,
            "mean_average_accuracy": float(avg.mean()),
            "std_average_accuracy": float(avg.std()),
            "mean_forgetting": float(forg.mean()),
            "std_forgetting": float(forg.std()),
        }
    cfg_dict = dataclasses.asdict(cfg)
    cfg_dict["train"] = dataclasses.asdict(cfg.train)
    cfg_dict["variants"] = list(cfg.variants)
    cfg_dict["mlp_widths"] = list(cfg.mlp_widths)
    return {"config": cfg_dict, "trials": list(trials), "variants": bundle_variants}


# ---------------------------------------------------------------------------
# export / report
# ---------------------------------------------------------------------------

def export_results(bundle: dict, out_dir: str) -> list[str]:
    """Write results.json plus the CSV views; deterministic bytes for a given bundle."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "results.json")
    persist.atomic_write_text(path, persist.dump_json(bundle))
    written.append(path)

    for variant, record in sorted(bundle["variants"].items()):
        for row in record["trials"]:
            matrix = row["matrix"]
            k_total = len(matrix)
            lines = ["period," + ",".join(f"domain_{k + 1}" for k in range(k_total))]
            for kp in range(k_total):
                cells = [("" if matrix[kp][k] is None else repr(matrix[kp][k]))
                         for k in range(k_total)]
                lines.append(f"{kp + 1}," + ",".join(cells))
            path = os.path.join(out_dir, f"matrix_{variant}_{row['trial']}.csv")
            persist.atomic_write_text(path, "\n".join(lines) + "\n")
            written.append(path)

    lines = ["variant,mean_average_accuracy,std_average_accuracy,"
             "mean_forgetting,std_forgetting"]
    for variant, record in sorted(bundle["variants"].items()):
        if record.get("error"):
            lines.append(f"{variant},error,error,error,error")
        else:
            lines.append(",".join([variant,
                                   repr(record["mean_average_accuracy"]),
                                   repr(record["std_average_accuracy"]),
                                   repr(record["mean_forgetting"]),
                                   repr(record["std_forgetting"])]))
    path = os.path.join(out_dir, "summary.csv")
    persist.atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)

    lines = ["variant,trial,domain,period,accuracy"]
    for variant, record in sorted(bundle["variants"].items()):
        for row in record["trials"]:
            matrix = row["matrix"]
            for k in range(len(matrix)):
                for kp in range(k, len(matrix)):
                    lines.append(f"{variant},{row['trial']},{k + 1},{kp + 1},"
                                 f"{matrix[kp][k]!r}")
    path = os.path.join(out_dir, "curves.csv")
    persist.atomic_write_text(path, "\n".join(lines) + "\n")
    written.append(path)
    return written


def load_results(out_dir: str) -> dict:
    with open(os.path.join(out_dir, "results.json"), encoding="utf-8") as fh:
        return json.load(fh)


def verify_results(bundle: dict) -> list[str]:
    """Recompute the metrics from the persisted matrices; return mismatch notes."""
    problems = []
    for variant, record in bundle["variants"].items():
        if record.get("error"):
            continue
        for row in record["trials"]:
            matrix = np.array([[np.nan if v is None else v for v in r]
                               for r in row["matrix"]])
            metrics = compute_metrics(matrix)
            if metrics.average_accuracy != row["average_accuracy"]:
                problems.append(f"{variant} trial {row['trial']}: average accuracy mismatch")
            if metrics.forgetting != row["forgetting"]:
                problems.append(f"{variant} trial {row['trial']}: forgetting mismatch")
    return problems


def format_summary(bundle: dict) -> str:
    lines = [f"{'variant':<14} {'avg accuracy':>16} {'forgetting':>16}"]
    for variant, record in sorted(bundle["variants"].items()):
        if record.get("error"):
            lines.append(f"{variant:<14} failed: {record['error']}")
            continue
        lines.append(f"{variant:<14} "
                     f"{record['mean_average_accuracy']:>8.4f} ± {record['std_average_accuracy']:<6.4f}"
                     f"{record['mean_forgetting']:>9.4f} ± {record['std_forgetting']:<6.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def _load_mapping(path: str) -> dict:
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_experiment_config(path: str) -> ExperimentConfig:
    """Build an ExperimentConfig from a TOML file (or its JSON mirror)."""
    try:
        raw = _load_mapping(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a table/object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(raw)
    if "train" in kwargs:
        train_fields = {f.name for f in dataclasses.fields(tr.TrainConfig)}
        bad = set(kwargs["train"]) - train_fields
        if bad:
            raise ConfigError(f"unknown train keys: {sorted(bad)}")
        try:
            kwargs["train"] = tr.TrainConfig(**kwargs["train"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train config: {exc}") from exc
    for key in ("variants", "mlp_widths"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
