"""Experiment orchestration: dataset generation, discovery runs, sweeps over
the sparsity weight, evaluation, and test-retest reliability reports.

Every command is a pure function of (config, input files, seeds): reruns
produce byte-identical outputs, and per-subject work is independent so the
worker count never changes results.  Each run writes a resolved-config
snapshot next to its outputs.
"""
from __future__ import annotations

import csv
import dataclasses
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, matio
from .fges import FgesConfig, cpdag_to_dag, fit_fges
from .golem import GolemConfig, fit_golem, postprocess_golem
from .graphs import BinaryGraph, PriorMatrix
from .metrics import (
    MetricsReport,
    fdr,
    pfdr,
    rogers_tanimoto_per_edge,
    shd,
    total_error_pct,
)
from .priors import (
    StreamlineCounts,
    binarize_subject_sc,
    leave_one_out_sc,
    probabilistic_sc,
    symmetric_edge_prob,
)
from .stats import SufficientStats

METHODS = ("golem", "bgolem", "fges", "bfges")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    pipeline: str
    out: str
    seed: int = 0
    workers: int = 1
    method: str | None = None
    lam: float | None = None
    lambda_grid: list = field(default_factory=list)
    edges: list = field(default_factory=list)  # edge-count grid for weight thresholding
    sweep_metric: str = "pfdr"  # "pfdr" (structural support) or "fdr" (known truth)
    data: list = field(default_factory=list)
    priors: list = field(default_factory=list)
    truths: list = field(default_factory=list)
    sc_counts: list = field(default_factory=list)
    sc_binary: str | None = None
    ec_dir: str | None = None
    generate: dict = field(default_factory=dict)
    golem: dict = field(default_factory=dict)
    fges: dict = field(default_factory=dict)
    reliability: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pipeline not in ("generate", "discover", "evaluate", "sweep", "reliability"):
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        if self.method is not None and self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.sweep_metric not in ("pfdr", "fdr"):
            raise ConfigError("sweep_metric must be 'pfdr' or 'fdr'")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved(self) -> dict:
        return dataclasses.asdict(self)

    def check_inputs(self) -> None:
        for group in (self.data, self.priors, self.truths, self.sc_counts):
            for p in group:
                if not Path(p).exists():
                    raise ConfigError(f"input file does not exist: {p}")
        for p in (self.sc_binary, self.ec_dir):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"input path does not exist: {p}")


def _subject_id(path) -> str:
    p = Path(path)
    return p.parent.name if p.stem in ("data", "counts", "prior", "truth") else p.stem


def _write_report_csv(path, reports: list[MetricsReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MetricsReport.FIELDS)
        for rep in reports:
            writer.writerow(rep.as_row())


# --------------------------------------------------------------------- generate

def cmd_generate(config: ExperimentConfig) -> dict:
    """Write a seeded batch of datasets (ground truth + observations)."""
    gen = dict(config.generate)
    kind = gen.pop("kind", None)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    matio.write_json(out / "config_snapshot.json", config.resolved())
    if kind == "sf7":
        datasets = _generate_sf7(config, gen, out)
    elif kind == "hybrid":
        datasets = _generate_hybrid(config, gen, out)
    else:
        raise ConfigError(f"generate.kind must be 'sf7' or 'hybrid', got {kind!r}")
    manifest = {"kind": kind, "datasets": datasets}
    matio.write_json(out / "manifest.json", manifest)
    return manifest | {"root": str(out)}


def _generate_sf7(config: ExperimentConfig, gen: dict, out: Path) -> list[dict]:
    nodes = gen.get("nodes", [50, 75, 100, 125, 150])
    degree = int(gen.get("degree", 7))
    m = int(gen.get("time_points", 300))
    seeds = gen.get("seeds", [config.seed])
    corrupt = gen.get("prior_corruption")  # {p_true, p_false, flip_fraction}
    datasets = []
    for n in nodes:
        for seed in seeds:
            name = f"sf7_n{int(n):03d}_s{int(seed):03d}"
            ddir = out / name
            truth = datagen.generate_scale_free_dag(int(n), degree, datagen.derive_seed(seed, 0, n))
            sem = datagen.random_sem(truth, datagen.derive_seed(seed, 1, n))
            x = datagen.sample_linear_sem(sem, m, datagen.derive_seed(seed, 2, n))
            matio.write_graph(ddir / "truth.csv", truth)
            matio.write_matrix(ddir / "data.csv", x)
            entry = {
                "name": name, "n": int(n), "seed": int(seed), "degree": degree,
                "time_points": m, "edges": truth.edge_count,
                "data": f"{name}/data.csv", "truth": f"{name}/truth.csv",
            }
            if corrupt:
                prior = datagen.corrupt_skeleton_prior(
                    truth,
                    p_true=float(corrupt.get("p_true", 0.9)),
                    p_false=float(corrupt.get("p_false", 0.1)),
                    flip_fraction=float(corrupt.get("flip_fraction", 0.05)),
                    seed=datagen.derive_seed(seed, 3, n),
                )
                matio.write_prior(ddir / "prior.csv", prior)
                entry["prior"] = f"{name}/prior.csv"
            matio.write_json(ddir / "manifest.json", entry)
            datasets.append(entry)
    return datasets


def _generate_hybrid(config: ExperimentConfig, gen: dict, out: Path) -> list[dict]:
    subjects = int(gen.get("subjects", 50))
    n = int(gen.get("n", 164))
    target_edges = int(gen.get("target_edges", 1000))
    m = int(gen.get("time_points", 1200))
    tr = float(gen.get("tr_seconds", 0.72))
    snr = float(gen.get("snr", 10.0))
    standardize = bool(gen.get("standardize", True))
    template_seed = int(gen.get("sc_template_seed", config.seed))
    template = datagen.synthetic_streamline_counts(n, template_seed)
    datasets = []
    for s in range(subjects):
        name = f"hybrid_s{s:03d}"
        ddir = out / name
        counts = datagen.subject_streamline_counts(
            template, datagen.derive_seed(config.seed, 10, s)
        )
        prior = symmetric_edge_prob(probabilistic_sc(StreamlineCounts(counts)))
        spec = datagen.HybridSpec(
            prior=prior,
            target_edges=target_edges,
            time_points=m,
            tr_seconds=tr,
            snr=snr,
            standardize=standardize,
            rng_seed=datagen.derive_seed(config.seed, 11, s),
        )
        truth, bold = datagen.make_hybrid_dataset(spec)
        matio.write_matrix(ddir / "counts.csv", counts)
        matio.write_prior(ddir / "prior.csv", prior)
        matio.write_graph(ddir / "truth.csv", truth)
        matio.write_matrix(ddir / "data.csv", bold)
        entry = {
            "name": name, "n": n, "subject": s, "seed": spec.rng_seed,
            "target_edges": target_edges, "time_points": m, "tr_seconds": tr,
            "snr": snr, "standardize": standardize,
            "hrf": dataclasses.asdict(spec.hrf),
            "prior_provenance": {"kappa": 1.0, "floor": prior.floor,
                                 "volume_adjusted": False},
            "counts": f"{name}/counts.csv", "prior": f"{name}/prior.csv",
            "data": f"{name}/data.csv", "truth": f"{name}/truth.csv",
        }
        matio.write_json(ddir / "manifest.json", entry)
        datasets.append(entry)
    return datasets


# --------------------------------------------------------------------- discover

def _golem_config(config: ExperimentConfig) -> GolemConfig:
    kw = dict(config.golem)
    if config.lam is not None:
        kw["lambda_sparse"] = config.lam
    try:
        return GolemConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"golem config: {exc}") from exc


def _fges_config(config: ExperimentConfig, prior: PriorMatrix | None) -> FgesConfig:
    kw = dict(config.fges)
    kw.pop("standardize", None)
    if config.lam is not None:
        kw["lambda_bic"] = config.lam
    try:
        return FgesConfig(prior=prior, **kw)
    except TypeError as exc:
        raise ConfigError(f"fges config: {exc}") from exc


def _discover_one(job: dict) -> dict:
    """One subject's discovery run; executes inside a worker process."""
    config = ExperimentConfig.from_dict(job["config"])
    method = config.method
    subject = job["subject"]
    root = Path(job["root"])
    sdir = Path(job["out"])
    sdir.mkdir(parents=True, exist_ok=True)
    x = matio.read_matrix(job["data"])
    prior = matio.read_prior(job["prior"]) if job.get("prior") else None
    if method in ("bgolem", "bfges") and prior is None:
        raise ConfigError(f"method {method} requires a prior for subject {subject}")

    rel = str(sdir.relative_to(root))
    result = {"subject": subject, "method": method, "out": str(sdir), "ecs": []}
    if method in ("golem", "bgolem"):
        gcfg = _golem_config(config)
        info: dict = {}
        w = fit_golem(x, gcfg, prior=prior if method == "bgolem" else None, info=info)
        matio.write_weights(sdir / "weights.csv", w)
        ks = [int(k) for k in (config.edges or [])]
        for k in ks:
            ec = postprocess_golem(w, k=k)
            matio.write_graph(sdir / f"ec_k{k:04d}.csv", ec)
            result["ecs"].append(
                {"k": k, "path": f"{rel}/ec_k{k:04d}.csv", "edges": ec.edge_count}
            )
        if not ks:
            ec = postprocess_golem(w, tau=gcfg.postprocess_threshold)
            matio.write_graph(sdir / "ec.csv", ec)
            result["ecs"].append({"k": None, "path": f"{rel}/ec.csv", "edges": ec.edge_count})
        manifest = {
            "subject": subject, "method": method,
            "config": dataclasses.asdict(gcfg) | {"init": None},
            "lambda": gcfg.lambda_sparse, "iterations": info["iterations"],
            "score_components": {
                "likelihood": info["likelihood"], "sparsity": info["sparsity"],
                "dag_penalty": info["dag_penalty"], "total": info["total"],
            },
            "ecs": result["ecs"],
        }
    else:
        fcfg = _fges_config(config, prior if method == "bfges" else None)
        standardize = bool(config.fges.get("standardize", True))
        stats = SufficientStats.from_data(x, standardize=standardize)
        trace: list = []
        cpdag = fit_fges(stats, fcfg, trace=trace)
        dag = cpdag_to_dag(cpdag, fcfg.tie_salt)
        matio.write_cpdag(sdir / "cpdag.csv", cpdag)
        matio.write_graph(sdir / "ec.csv", dag)
        trace_path = sdir / "trace.jsonl"
        trace_path.unlink(missing_ok=True)
        for rec in trace:
            matio.append_jsonl(trace_path, rec)
        result["ecs"].append({"k": None, "path": f"{rel}/ec.csv", "edges": dag.edge_count})
        manifest = {
            "subject": subject, "method": method,
            "config": {
                "lambda_bic": fcfg.lambda_bic, "max_parents": fcfg.max_parents,
                "tie_salt": fcfg.tie_salt, "refresh": fcfg.refresh,
                "standardize": standardize, "prior": bool(fcfg.prior is not None),
            },
            "lambda": fcfg.lambda_bic, "moves": len(trace),
            "ecs": result["ecs"],
        }
    result["lambda"] = manifest["lambda"]
    matio.write_json(sdir / "manifest.json", manifest)
    return result


def cmd_discover(config: ExperimentConfig) -> dict:
    """Fit the configured method on every subject and write the discovered
    connectomes; subjects run in parallel, failures are isolated."""
    if config.method is None:
        raise ConfigError("discover requires a method")
    if not config.data:
        raise ConfigError("discover requires data files")
    config.check_inputs()
    if config.method in ("bgolem", "bfges"):
        if len(config.priors) != len(config.data):
            raise ConfigError(
                f"method {config.method} needs one prior per subject "
                f"({len(config.priors)} priors for {len(config.data)} subjects)"
            )
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    matio.write_json(out / "config_snapshot.json", config.resolved())

    jobs = []
    for i, data_path in enumerate(config.data):
        subject = _subject_id(data_path)
        jobs.append(
            {
                "config": config.resolved(),
                "subject": subject,
                "data": str(data_path),
                "prior": str(config.priors[i]) if i < len(config.priors) else None,
                "root": str(out),
                "out": str(out / config.method / subject),
            }
        )
    results: list = [None] * len(jobs)
    errors: list[dict] = []
    if config.workers == 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _discover_one(job)
            except Exception as exc:  # isolate per-subject failures
                errors.append({"subject": job["subject"], "error": str(exc)})
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_discover_one, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    errors.append({"subject": jobs[i]["subject"], "error": str(exc)})
    summary = {
        "method": config.method,
        "subjects": [
            {k: v for k, v in r.items() if k != "out"} for r in results if r is not None
        ],
        "errors": sorted(errors, key=lambda e: e["subject"]),
    }
    matio.write_json(out / "discover_manifest.json", summary)
    return summary | {"root": str(out)}


# --------------------------------------------------------------------- evaluate

def _load_ec_entries(config: ExperimentConfig) -> list[dict]:
    ec_dir = Path(config.ec_dir or config.out)
    manifest_path = ec_dir / "discover_manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no discover_manifest.json under {ec_dir}")
    manifest = matio.read_json(manifest_path)
    entries = []
    for subj in manifest["subjects"]:
        for ec in subj["ecs"]:
            entries.append(
                {
                    "method": subj["method"], "subject": subj["subject"],
                    "k": ec["k"], "lambda": subj.get("lambda"),
                    "path": str(ec_dir / ec["path"]),
                }
            )
    return entries


def cmd_evaluate(config: ExperimentConfig) -> dict:
    """Score discovered connectomes against ground truth and/or the binary
    structural support; writes reports.csv and reports.jsonl."""
    config.check_inputs()
    entries = _load_ec_entries(config)
    truth_by_subject = {
        _subject_id(p): matio.read_graph(p) for p in config.truths
    }
    sc = matio.read_graph(config.sc_binary, directed=False) if config.sc_binary else None
    reports = []
    for entry in entries:
        est = matio.read_graph(entry["path"])
        truth = truth_by_subject.get(entry["subject"])
        rep = MetricsReport(
            method=entry["method"],
            subject=entry["subject"],
            k=entry["k"],
            lam=entry["lambda"],
            seed=config.seed,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if truth is not None:
                rep.fdr = fdr(est, truth)
                rep.shd = shd(est, truth)
                if est.edge_count > 0:
                    rep.total_error_pct = total_error_pct(est, truth)
            if sc is not None:
                rep.pfdr = pfdr(est, sc)
        reports.append(rep)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_report_csv(out / "reports.csv", reports)
    jsonl = out / "reports.jsonl"
    jsonl.unlink(missing_ok=True)
    for rep in reports:
        matio.append_jsonl(jsonl, rep.as_dict())
    return {"reports": [rep.as_dict() for rep in reports]}


# ------------------------------------------------------------------------ sweep

def leave_one_out_binaries(sc_counts_paths: list, quantile: float = 0.5) -> list[BinaryGraph]:
    """Per-subject binary structural graphs from majority votes that exclude
    the subject itself."""
    graphs = [
        binarize_subject_sc(StreamlineCounts(matio.read_matrix(p)), quantile)
        for p in sc_counts_paths
    ]
    return [leave_one_out_sc(graphs, i) for i in range(len(graphs))]


def cmd_sweep(config: ExperimentConfig) -> dict:
    """Discover and evaluate at every grid value of the sparsity weight, then
    select the value minimizing the mean sweep metric (ties pick the smaller
    weight)."""
    if not config.lambda_grid:
        raise ConfigError("sweep requires a nonempty lambda_grid")
    if config.sweep_metric == "fdr" and not config.truths:
        raise ConfigError("fdr sweep requires ground-truth graphs")
    if config.sweep_metric == "pfdr" and not (config.sc_counts or config.sc_binary):
        raise ConfigError("pfdr sweep requires per-subject counts or a binary SC")
    config.check_inputs()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    matio.write_json(out / "config_snapshot.json", config.resolved())

    truth_by_subject = {_subject_id(p): matio.read_graph(p) for p in config.truths}
    loo = None
    group_sc = None
    if config.sweep_metric == "pfdr":
        if config.sc_counts:
            if len(config.sc_counts) != len(config.data):
                raise ConfigError("pfdr sweep needs one streamline matrix per subject")
            loo = {
                _subject_id(d): g
                for d, g in zip(config.data, leave_one_out_binaries(config.sc_counts))
            }
            matio.write_json(
                out / "sc_provenance.json",
                {"mode": "leave_one_out_majority", "binarize": "quantile-strict",
                 "quantile": 0.5, "excluded": "self",
                 "subjects": len(config.sc_counts)},
            )
        else:
            group_sc = matio.read_graph(config.sc_binary, directed=False)

    rows = []
    per_lambda = {}
    for lam in sorted(float(v) for v in config.lambda_grid):
        sub = dataclasses.replace(
            config,
            pipeline="discover",
            lam=lam,
            out=str(out / f"lam_{lam:g}"),
        )
        summary = cmd_discover(sub)
        vals = []
        for subj in summary["subjects"]:
            truth = truth_by_subject.get(subj["subject"])
            for ec in subj["ecs"]:
                est = matio.read_graph(Path(summary["root"]) / ec["path"])
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    if config.sweep_metric == "fdr":
                        if truth is None:
                            raise ConfigError(f"no truth for subject {subj['subject']}")
                        vals.append(fdr(est, truth))
                    else:
                        ref = loo[subj["subject"]] if loo else group_sc
                        vals.append(pfdr(est, ref))
        mean_val = float(np.mean(vals)) if vals else float("nan")
        per_lambda[lam] = mean_val
        rows.append({"lambda": lam, f"mean_{config.sweep_metric}": mean_val, "runs": len(vals)})

    best = min(per_lambda, key=lambda lam: (per_lambda[lam], lam))
    table_path = out / "sweep_table.csv"
    with table_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    selection = {
        "method": config.method, "metric": config.sweep_metric,
        "selected_lambda": best, "mean_values": {repr(k): v for k, v in per_lambda.items()},
    }
    matio.write_json(out / "selection.json", selection)
    return selection


# -------------------------------------------------------------------- reliability

def _occurrence_matrix(paths: list) -> tuple[np.ndarray, int]:
    graphs = [matio.read_graph(p) for p in paths]
    n = graphs[0].n
    occ = np.stack([g.a for g in graphs])  # subjects x n x n
    return occ, n


def cmd_reliability(config: ExperimentConfig) -> dict:
    """Per-edge test-retest dissimilarity for one method's connectome sets.

    For every directed edge discovered in any subject (either session), the
    occurrence vector across subjects on the test day is compared against the
    retest day; summaries report the median and interquartile range, plus a
    within-session pairing for reference.
    """
    rel = dict(config.reliability)
    test_paths = rel.get("test") or []
    retest_paths = rel.get("retest") or []
    if not test_paths or len(test_paths) != len(retest_paths):
        raise ConfigError("reliability requires matching test/retest EC lists")
    for p in list(test_paths) + list(retest_paths):
        if not Path(p).exists():
            raise ConfigError(f"input file does not exist: {p}")
    occ_test, n = _occurrence_matrix(test_paths)
    occ_retest, n2 = _occurrence_matrix(retest_paths)
    if n != n2 or occ_test.shape != occ_retest.shape:
        raise ConfigError("test and retest subject sets do not match")

    candidates = np.argwhere((occ_test.sum(axis=0) + occ_retest.sum(axis=0)) > 0)
    per_edge = []
    for i, j in candidates:
        value = rogers_tanimoto_per_edge(occ_test[:, i, j], occ_retest[:, i, j])
        per_edge.append({"i": int(i), "j": int(j), "rt": value})

    values = np.array([e["rt"] for e in per_edge]) if per_edge else np.zeros(0)

    def within_session(occ: np.ndarray) -> np.ndarray:
        """Per-edge mean pairwise dissimilarity among subjects of one session.
        A subject pair scores 1 when it disagrees on the edge, so the mean
        over pairs is 2 c (s - c) / (s (s - 1)) with c subjects carrying it."""
        s = occ.shape[0]
        if s < 2 or len(candidates) == 0:
            return np.zeros(0)
        c = occ[:, candidates[:, 0], candidates[:, 1]].sum(axis=0).astype(float)
        return 2.0 * c * (s - c) / (s * (s - 1))

    within = np.concatenate([within_session(occ_test), within_session(occ_retest)])

    def summary(vals: np.ndarray) -> dict:
        if vals.size == 0:
            return {"edges": 0, "median": 0.0, "iqr": [0.0, 0.0]}
        return {
            "edges": int(vals.size),
            "median": float(np.median(vals)),
            "iqr": [float(np.quantile(vals, 0.25)), float(np.quantile(vals, 0.75))],
        }

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    matio.write_json(out / "config_snapshot.json", config.resolved())
    with (out / "per_edge.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["i", "j", "rt"])
        writer.writeheader()
        for e in per_edge:
            writer.writerow({"i": e["i"], "j": e["j"], "rt": repr(e["rt"])})
    report = {
        "method": config.method,
        "subjects": len(test_paths),
        "paired": summary(values),
        "within_session": summary(within),
    }
    matio.write_json(out / "summary.json", report)
    return report


PIPELINES = {
    "generate": cmd_generate,
    "discover": cmd_discover,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "reliability": cmd_reliability,
}


def run(config: ExperimentConfig) -> dict:
    return PIPELINES[config.pipeline](config)
