"""Experiment orchestration: generate -> cluster -> learn -> evaluate.

Everything is driven by one master seed; each stage and task derives a
named substream, so execution order and threading never change results.
Result CSVs are written with repr-precision floats and a config-hash
comment line, making same-seed reruns byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import (
    cluster_users,
    power_features,
    save_assignment,
    sensing_codebook,
)
from .codebook import (
    Codebook,
    PhaseGrid,
    aligned_oracle,
    codebook_objective,
    dft_codebook,
    dft_phases,
    egc_upper_bound,
    exhaustive_search,
    gain,
    gain_matrix,
    save_codebook,
    EXHAUSTIVE_GUARD,
)
from .drl.agent import AgentConfig
from .drl.learn import LearnedResult, learn_vector
from .errors import ConfigurationError, PipelineError
from .multilevel import LevelSpec
from .scenario import (
    ChannelDataset,
    ClusterSpec,
    SurfaceGeometry,
    SyntheticScenario,
    VisibilityRegion,
    export_channels,
    generate_scenario,
    import_channels,
    random_visibility,
)
from .utils import derive_seed
from .validation import channel_matrix

logger = logging.getLogger(__name__)


def _deg(x):
    return float(np.deg2rad(x))


def scenario_from_params(params: dict, seed: int) -> SyntheticScenario:
    """Build a SyntheticScenario from the config-file dictionary."""
    elements = int(params.get("elements", 32))
    subsurfaces = params.get("subsurfaces")
    spacing = float(params.get("spacing", 0.5))
    if subsurfaces:
        geometry = SurfaceGeometry.distributed_ulas(
            subsurfaces, spacing=spacing, gap=float(params.get("gap", 4.0))
        )
        if geometry.num_elements != elements:
            raise ConfigurationError(
                f"subsurfaces {subsurfaces} do not sum to elements={elements}"
            )
    else:
        geometry = SurfaceGeometry.ula(elements, spacing=spacing)
    clusters = tuple(
        ClusterSpec(
            center_aoa=_deg(c["center_deg"]),
            angular_spread=_deg(c.get("spread_deg", 2.0)),
            num_users=int(c["users"]),
            num_paths=int(c.get("paths", 5)),
            mean_power=float(c.get("power", 1.0)),
        )
        for c in params.get("clusters", [])
    )
    visibility = None
    vis = params.get("visibility")
    if vis:
        mode = vis.get("mode", "explicit")
        if mode == "explicit":
            visibility = VisibilityRegion(
                np.deg2rad(np.asarray(vis["phi_min_deg"], dtype=float)),
                np.deg2rad(np.asarray(vis["phi_max_deg"], dtype=float)),
            )
        elif mode == "random":
            rng = np.random.default_rng(derive_seed(seed, "visibility"))
            visibility = random_visibility(
                geometry.num_elements,
                rng,
                width_range=(
                    _deg(vis.get("min_width_deg", 90.0)),
                    _deg(vis.get("max_width_deg", 360.0)),
                ),
            )
        else:
            raise ConfigurationError(f"unknown visibility mode {mode!r}")
    return SyntheticScenario(
        geometry=geometry,
        clusters=clusters,
        tx_aoa=_deg(params.get("tx_aoa_deg", 0.0)),
        tx_paths=int(params.get("tx_paths", 1)),
        tx_spread=_deg(params.get("tx_spread_deg", 0.0)),
        visibility=visibility,
        per_subsurface_paths=bool(params.get("per_subsurface_paths", False)),
        transmit_power=float(params.get("transmit_power", 1.0)),
        noise_power=float(params.get("noise_power", 0.0)),
        seed=derive_seed(seed, "gen"),
    )


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, loadable from a JSON file."""

    seed: int = 0
    bits: int = 3
    n_beams: int = 4
    level_sizes: tuple[int, ...] | None = None
    out_dir: str | None = None
    threads: int = 1
    channels_file: str | None = None
    scenario: dict | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    sensing_beams: int = 32
    feature_noise: float = 0.0
    dft_beams: int = 16
    dft_ideal: bool = True
    include_exhaustive: bool = False
    exhaustive_guard: int = EXHAUSTIVE_GUARD
    transfer: bool = True
    skip_learning: bool = False

    def __post_init__(self):
        if self.level_sizes is not None:
            self.level_sizes = tuple(int(s) for s in self.level_sizes)
        if self.n_beams < 1:
            raise ConfigurationError("need at least one beam")
        if self.scenario is None and self.channels_file is None:
            raise ConfigurationError("config needs a scenario or a channels_file")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        agent_raw = dict(raw.get("agent", {}))
        if "hidden" in agent_raw:
            agent_raw["hidden"] = tuple(agent_raw["hidden"])
        clustering_raw = raw.get("clustering", {})
        baselines = raw.get("baselines", {})
        return cls(
            seed=int(raw.get("seed", 0)),
            bits=int(raw.get("q", 3)),
            n_beams=int(raw.get("n_beams", 4)),
            level_sizes=tuple(raw["levels"]) if raw.get("levels") else None,
            out_dir=raw.get("out_dir"),
            threads=int(raw.get("threads", 1)),
            channels_file=raw.get("channels_file"),
            scenario=raw.get("scenario"),
            agent=AgentConfig(**agent_raw),
            sensing_beams=int(clustering_raw.get("sensing_beams", 32)),
            feature_noise=float(clustering_raw.get("noise_scale", 0.0)),
            dft_beams=int(baselines.get("dft_beams", 16)),
            dft_ideal=bool(baselines.get("dft_ideal", True)),
            include_exhaustive=bool(baselines.get("exhaustive", False)),
            exhaustive_guard=int(baselines.get("exhaustive_guard", EXHAUSTIVE_GUARD)),
            transfer=bool(raw.get("transfer", True)),
            skip_learning=bool(raw.get("skip_learning", False)),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = asdict(self.agent)
        if self.level_sizes is not None:
            d["level_sizes"] = list(self.level_sizes)
        d["agent"]["hidden"] = list(self.agent.hidden)
        return d

    def config_hash(self) -> str:
        """Hash of the experiment inputs (output location and thread count
        do not change results and are excluded)."""
        d = self.to_dict()
        d.pop("out_dir", None)
        d.pop("threads", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class ResultBundle:
    """Learned codebook plus every number the run produced."""

    codebook: Codebook | None
    labels: np.ndarray
    results: list[LearnedResult | None]
    objectives: dict[str, float]
    per_user: dict[str, np.ndarray]
    dataset: ChannelDataset
    config_hash: str
    timings: dict[str, float]
    out_files: list[str] = field(default_factory=list)

    def sanity_check(self) -> None:
        """Verify the gain ordering on every run.

        learned <= EGC mean and aligned mean <= EGC mean are provable
        bounds and raise on violation. learned <= aligned mean holds at
        realistic scale but is not a theorem (a converged learner can beat
        the snapped common-offset oracle on tiny single-user clusters), so
        that comparison only logs a warning.
        """
        slack = 1e-9
        aligned = self.objectives["aligned_mean"]
        egc = self.objectives["egc_mean"]
        if aligned > egc * (1 + slack) + 1e-12:
            raise PipelineError(
                f"sanity chain violated: aligned mean {aligned} > EGC mean {egc}"
            )
        learned = self.objectives.get("learned")
        if learned is None:
            return
        if learned > egc * (1 + slack) + 1e-12:
            raise PipelineError(
                f"sanity chain violated: learned {learned} > EGC mean {egc}"
            )
        if learned > aligned * (1 + slack) + 1e-12:
            logger.warning(
                "learned objective %.6g exceeds the aligned-oracle mean %.6g "
                "(possible on tiny single-user clusters)", learned, aligned,
            )


def _float_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, rows, header, config_hash: str | None = None) -> None:
    """CSV with repr-precision floats and an optional config-hash comment."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_float_cell(x) for x in row])


def load_channels(config: ExperimentConfig) -> ChannelDataset:
    if config.channels_file is not None:
        dataset = import_channels(config.channels_file)
    else:
        dataset = generate_scenario(scenario_from_params(config.scenario, config.seed))
    dataset.q_hint = config.bits
    return dataset


def _trace_rows(result: LearnedResult, level: int):
    for trace in result.task_traces:
        if trace.level != level:
            continue
        for i in range(trace.iterations.shape[0]):
            yield (
                trace.group,
                int(trace.iterations[i]),
                float(trace.prev_gain[i]),
                float(trace.gain[i]),
                float(trace.best_gain[i]),
                float(trace.reward[i]),
                float(trace.critic_loss[i]),
                float(trace.actor_loss[i]),
            )


TRACE_HEADER = ["group", "iteration", "prev_gain", "gain", "best_gain",
                "reward", "critic_loss", "actor_loss"]


def run_pipeline(config: ExperimentConfig) -> ResultBundle:
    """Full experiment: channels, clustering, per-cluster learning, baselines.

    Deterministic per master seed. Any stage failure is re-raised as a
    PipelineError naming the stage.
    """
    chash = config.config_hash()
    timings: dict[str, float] = {}
    grid = PhaseGrid(config.bits)

    def staged(name, fn):
        start = time.perf_counter()
        try:
            out = fn()
        except PipelineError:
            raise
        except Exception as e:
            raise PipelineError(f"stage '{name}' failed: {e}") from e
        timings[name] = time.perf_counter() - start
        return out

    dataset = staged("gen", lambda: load_channels(config))
    users = channel_matrix(dataset)
    num_users, m = users.shape
    spec = LevelSpec(config.level_sizes if config.level_sizes else (m,))
    spec.require_elements(m)

    def do_cluster():
        sensing = sensing_codebook(
            m, config.sensing_beams, grid, seed=derive_seed(config.seed, "cluster", "sensing")
        )
        rng = np.random.default_rng(derive_seed(config.seed, "cluster", "noise"))
        features = power_features(users, sensing, config.feature_noise, rng)
        assignment = cluster_users(
            features, config.n_beams, seed=derive_seed(config.seed, "cluster", "kmeans")
        )
        return sensing, assignment

    sensing, assignment = staged("cluster", do_cluster)
    labels = assignment.labels

    results: list[LearnedResult | None] = [None] * config.n_beams
    codebook = None
    if not config.skip_learning:
        def learn_cluster(c, group_workers):
            members = users[labels == c]
            if members.shape[0] == 0:
                return None
            return learn_vector(
                members, spec, grid, config.agent,
                master_seed=derive_seed(config.seed, "learn", c),
                transfer=config.transfer,
                max_workers=group_workers,
            )

        def do_learn():
            beams = np.full((config.n_beams, m), grid.zero_index, dtype=np.int64)
            clusters = range(config.n_beams)
            if config.threads > 1 and config.n_beams > 1:
                # parallelize across clusters; sibling groups stay
                # sequential inside each to avoid nested pools
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(max_workers=config.threads) as pool:
                    for c, out in zip(clusters, pool.map(
                            lambda c: learn_cluster(c, 1), clusters)):
                        results[c] = out
            else:
                for c in clusters:
                    results[c] = learn_cluster(c, config.threads)
            for c in clusters:
                if results[c] is not None:
                    beams[c] = results[c].vector.indices
            return Codebook(beams, grid)

        codebook = staged("learn", do_learn)

    def do_eval():
        objectives: dict[str, float] = {}
        per_user: dict[str, np.ndarray] = {}
        per_user["egc"] = np.array([egc_upper_bound(u) for u in users])
        per_user["aligned"] = np.array(
            [gain(u, aligned_oracle(u, grid)) for u in users]
        )
        objectives["egc_mean"] = float(per_user["egc"].mean())
        objectives["aligned_mean"] = float(per_user["aligned"].mean())
        if codebook is not None:
            objectives["learned"] = codebook_objective(codebook, users)
        dft = dft_codebook(m, config.dft_beams, grid)
        objectives["dft_quantized"] = codebook_objective(dft, users)
        if config.dft_ideal:
            ideal = dft_phases(m, config.dft_beams)
            gains = np.abs(users @ np.exp(1j * ideal).T) ** 2 / m
            objectives["dft_ideal"] = float(gains.max(axis=1).mean())
        if config.include_exhaustive:
            best = 0.0
            total = np.zeros(num_users)
            for c in range(config.n_beams):
                members = users[labels == c]
                if members.shape[0] == 0:
                    continue
                vec = exhaustive_search(members, grid, guard=config.exhaustive_guard)
                total[labels == c] = gain_matrix(members, Codebook(vec.indices[None, :], grid))[:, 0]
            objectives["exhaustive"] = float(total.mean())
        return objectives, per_user

    objectives, per_user = staged("eval", do_eval)

    bundle = ResultBundle(
        codebook=codebook,
        labels=labels,
        results=results,
        objectives=objectives,
        per_user=per_user,
        dataset=dataset,
        config_hash=chash,
        timings=timings,
    )
    bundle.sanity_check()

    if config.out_dir is not None:
        staged("write", lambda: _write_outputs(bundle, config, sensing, assignment))
    return bundle


def _write_outputs(bundle: ResultBundle, config: ExperimentConfig,
                   sensing, assignment) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = bundle.config_hash
    files = []

    if config.channels_file is None:
        path = out / "channels.json"
        export_channels(path, bundle.dataset, config_hash=chash)
        files.append(str(path))

    path = out / "assignment.csv"
    save_assignment(path, assignment, out / "centroids.json", sensing, config_hash=chash)
    files.extend([str(path), str(out / "centroids.json")])

    if bundle.codebook is not None:
        path = out / "codebook.json"
        save_codebook(path, bundle.codebook, config_hash=chash)
        files.append(str(path))

    rows = [("config_hash", chash),
            ("m", bundle.dataset.num_elements),
            ("num_users", bundle.dataset.num_users),
            ("q", config.bits),
            ("n_beams", config.n_beams),
            ("dft_beams", config.dft_beams)]
    for key in ("learned", "dft_quantized", "dft_ideal", "exhaustive",
                "aligned_mean", "egc_mean"):
        if key in bundle.objectives:
            rows.append((key, float(bundle.objectives[key])))
    path = out / "results.csv"
    write_csv(path, rows, ["metric", "value"], config_hash=chash)
    files.append(str(path))

    for c, result in enumerate(bundle.results):
        if result is None:
            continue
        levels = sorted({t.level for t in result.task_traces})
        for level in levels:
            path = out / f"trace_{c}_{level}.csv"
            write_csv(path, _trace_rows(result, level), TRACE_HEADER, config_hash=chash)
            files.append(str(path))

    with open(out / "timings.json", "w", encoding="utf-8") as fh:
        body = {"config_hash": chash}
        body.update({k: round(v, 6) for k, v in bundle.timings.items()})
        json.dump(body, fh, indent=1)
        fh.write("\n")

    from .plots import emit_plots

    if any(r is not None for r in bundle.results):
        files.extend(emit_plots(bundle, out, config_hash=chash))
    bundle.out_files = files


SWEEP_HEADER = ["n_beams", "learned_objective", "dft_objective", "egc_mean"]


def sweep_codebook_size(config: ExperimentConfig, sizes) -> list[dict]:
    """One pipeline run per codebook size; rows of (N, learned, DFT, EGC)."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigurationError("sweep needs at least one codebook size")
    table = []
    for n in sizes:
        run_cfg = replace(config, n_beams=n, out_dir=None)
        bundle = run_pipeline(run_cfg)
        table.append({
            "n_beams": n,
            "learned_objective": bundle.objectives.get("learned", float("nan")),
            "dft_objective": bundle.objectives["dft_quantized"],
            "egc_mean": bundle.objectives["egc_mean"],
        })
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [
            (r["n_beams"], r["learned_objective"], r["dft_objective"], r["egc_mean"])
            for r in table
        ]
        write_csv(out / "sweep.csv", rows, SWEEP_HEADER, config_hash=config.config_hash())
        from .plots import emit_plots

        emit_plots(table, out, config_hash=config.config_hash())
    return table


def oracle_report(users, grid: PhaseGrid, include_exhaustive: bool = True,
                  guard: int = EXHAUSTIVE_GUARD) -> dict:
    """Per-user oracle gains (EGC >= exhaustive >= aligned for each user).

    The shared-vector optimum (one beam maximizing the mean over all users)
    is reported separately when exhaustive search is enabled.
    """
    users = channel_matrix(users)
    report: dict = {"per_user": [], "q": grid.bits, "m": int(users.shape[1])}
    for i, u in enumerate(users):
        entry = {
            "user": i,
            "egc": egc_upper_bound(u),
        }
        vec = aligned_oracle(u, grid)
        entry["aligned_gain"] = gain(u, vec)
        entry["aligned_vector"] = (vec.indices + 1).tolist()
        if include_exhaustive:
            best = exhaustive_search(u[None, :], grid, guard=guard)
            entry["exhaustive_gain"] = gain(u, best)
            entry["exhaustive_vector"] = (best.indices + 1).tolist()
        report["per_user"].append(entry)
    report["egc_mean"] = float(np.mean([e["egc"] for e in report["per_user"]]))
    report["aligned_mean"] = float(
        np.mean([e["aligned_gain"] for e in report["per_user"]])
    )
    if include_exhaustive:
        report["exhaustive_mean"] = float(
            np.mean([e["exhaustive_gain"] for e in report["per_user"]])
        )
        shared = exhaustive_search(users, grid, guard=guard)
        report["shared_exhaustive_objective"] = codebook_objective(
            Codebook(shared.indices[None, :], grid), users
        )
        report["shared_exhaustive_vector"] = (shared.indices + 1).tolist()
    return report
