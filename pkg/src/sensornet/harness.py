"""Figure-shaped experiment runner driven by a single JSON config."""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import SirParams, simulate_sir
from .events import (DAY, activity_profile, born_tags, first_use_array, load_events, load_messages, tag_stats,
                     tag_timeline, trim_to_active)
from .graph import (DIRECTED, UNDIRECTED, DegreeDistribution, IdMap, betweenness, connected_components,
                    degree_histogram, generate_ba, generate_er, ks_distance, read_edge_list)
from .leadtime import (SamplingSpec, lead_time_experiment, lead_time_table, realtime_detect, replicate_rng,
                       draw_groups, shuffle_null, size_sweep, source_from_events, source_from_trace,
                       sweep_table_csv, NoAnalyzableReplicates)
from .paradox import (PER_NODE_FRIEND, POOLED_NEIGHBORS, NodeSample, friend_degree_dist, paradox_stats,
                      remove_overlap, sample_control, sample_degree_dist, sample_sensors, sampled_friend_dist)
from .samplestats import DesignError, DetectionDesign, detection_curve, detection_curve_csv, grid

KINDS = ("fig1", "fig2a", "fig2bc", "fig3", "fig4", "samplemath")
EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: Path
    threads: int = 1
    params: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def path(self, key: str) -> Path | None:
        value = self.params.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def inputs(self) -> dict[str, Path]:
        return {k: self.path(k) for k in ("edges", "ids", "events", "messages") if self.params.get(k)}

    def echo(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, **self.params}


_REQUIRED = {
    "fig1": (),
    "fig2a": (),
    "fig2bc": ("edges", "events"),
    "fig3": ("edges", "events"),
    "fig4": ("edges", "events"),
    "samplemath": ("N", "S"),
}


def load_config(path, kind: str | None = None, out=None, seed=None, threads=None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    cfg_kind = raw.pop("kind", None)
    kind = kind or cfg_kind
    if cfg_kind is not None and kind != cfg_kind:
        raise ConfigError(f"config is for kind {cfg_kind!r}, not {kind!r}")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    cfg_seed = raw.pop("seed", None)
    seed = cfg_seed if seed is None else seed
    if seed is None:
        raise ConfigError("a seed is required")
    cfg_out = raw.pop("out", None)
    out = out if out is not None else cfg_out
    if out is None:
        raise ConfigError("an output directory is required (config 'out' or --out)")
    cfg_threads = raw.pop("threads", 1)
    if threads is None:
        env = os.environ.get("SENSORNET_THREADS")
        threads = int(env) if env else cfg_threads
    cfg = ExperimentConfig(kind, int(seed), Path(out), max(1, int(threads)), raw, path.parent)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    for key in _REQUIRED[cfg.kind]:
        if key not in cfg.params:
            raise ConfigError(f"{cfg.kind} config needs {key!r}")
    for key, p in cfg.inputs().items():
        if not p.is_file():
            raise ConfigError(f"{key} file not found: {p}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.kind == "samplemath":
        p = cfg.params
        n_s = int(p.get("n_s", 5))
        try:
            for s in p.get("s_values", range(1, n_s + 1)):
                DetectionDesign(int(p["N"]), int(p["S"]), int(p.get("x_s", 10)), n_s, int(s))
        except (DesignError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid detection design: {exc}") from exc


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _clean(x):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if np.isnan(x) else float(x)
    return x


# --- inputs -------------------------------------------------------------------

def _graph(cfg: ExperimentConfig, default_n: int = 50_000, default_m: int = 5):
    p = cfg.params
    if "edges" in p:
        directed = p.get("directed", True)
        ids = IdMap.load(cfg.path("ids")) if p.get("ids") else None
        g, ids, report = read_edge_list(cfg.path("edges"), DIRECTED if directed else UNDIRECTED, ids)
        return g, ids, {"duplicates_dropped": report.duplicates_dropped,
                        "self_loops_dropped": report.self_loops_dropped}
    gen = p.get("generate", {})
    model = gen.get("model", "ba")
    gseed = gen.get("seed", cfg.seed)
    if model == "ba":
        g = generate_ba(int(gen.get("n", default_n)), int(gen.get("m", default_m)), gseed)
    elif model == "er":
        g = generate_er(int(gen["n"]), float(gen["p"]), gseed)
    else:
        raise ConfigError(f"unknown generator {model!r}")
    return g, None, {"generated": model, "edges": g.edge_count}


def _events(cfg: ExperimentConfig, ids):
    window = cfg.params.get("window")
    return load_events(cfg.path("events"), window, users=ids)


def _spec(p: dict, **overrides) -> SamplingSpec:
    fields = dict(size=p.get("size"), fraction=p.get("fraction"), policy=p.get("policy", POOLED_NEIGHBORS),
                  direction=p.get("direction", "out"), min_infected=int(p.get("min_infected", 1)),
                  threshold=float(p.get("threshold", 0.0)), remove_overlap=bool(p.get("remove_overlap", False)))
    fields.update(overrides)
    return SamplingSpec(**fields)


def _summary_row(name, s) -> str:
    return f"{name},{s.n},{s.mean:.12g},{s.sem:.12g},{s.fraction_negative:.12g}\n"


# --- experiment kinds ---------------------------------------------------------

def run_fig1(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    g, _, info = _graph(cfg)
    gammas = p.get("gammas", [0.0125, 0.075, 0.25, 1.0])
    gamma = float(p.get("gamma", 0.0125))
    replicates = int(p.get("replicates", 20))
    directions = p.get("directions", ["in", "out"] if g.directed else ["total"])
    result = {"graph": info, "directions": {}}
    for direction in directions:
        P = degree_histogram(g, direction)
        stats = paradox_stats(P)
        tag = direction
        P.to_csv(out / f"network_{tag}.csv")
        friend_degree_dist(P).to_csv(out / f"friends_{tag}.csv")
        for gm in gammas:
            sampled_friend_dist(P, gm, dedup=False).to_csv(out / f"friends_gamma{gm:g}_{tag}.csv")
            sampled_friend_dist(P, gm, dedup=True).to_csv(out / f"sensors_gamma{gm:g}_{tag}.csv")
        predicted = sampled_friend_dist(P, gamma, dedup=True)
        size = max(1, int(round(gamma * g.node_count)))
        # a node of in-degree k is reached through the out-links of its k followers
        sensor_dir = "out" if direction == "in" else "in"
        ks_sensor, ks_control, c_deg, s_deg = [], [], [], []
        for r in range(replicates):
            rng = replicate_rng(cfg.seed, r)
            control = sample_control(g, size, rng)
            sensor = sample_sensors(g, control, POOLED_NEIGHBORS, sensor_dir, target_size=None, seed=rng)
            cd = sample_degree_dist(g, control, direction)
            sd = sample_degree_dist(g, sensor, direction)
            ks_control.append(ks_distance(cd, P))
            ks_sensor.append(ks_distance(sd, predicted))
            c_deg.append(g.degrees(direction)[control.members])
            s_deg.append(g.degrees(direction)[sensor.members])
        pooled_c = DegreeDistribution.from_degrees(np.concatenate(c_deg))
        pooled_s = DegreeDistribution.from_degrees(np.concatenate(s_deg))
        pooled_c.to_csv(out / f"control_observed_{tag}.csv")
        pooled_s.to_csv(out / f"sensor_observed_{tag}.csv")
        predicted.to_csv(out / f"sensor_predicted_{tag}.csv")
        result["directions"][tag] = {
            "mu": stats.mu, "sigma2": stats.sigma2, "rho": stats.rho,
            "gamma": gamma, "control_size": size, "replicates": replicates,
            "ks_sensor_mean": float(np.mean(ks_sensor)), "ks_sensor": ks_sensor,
            "ks_control_mean": float(np.mean(ks_control)), "ks_control": ks_control,
            "ks_control_pooled": ks_distance(pooled_c, P), "ks_sensor_pooled": ks_distance(pooled_s, predicted),
            "mean_degree_control": pooled_c.mu, "mean_degree_sensor": pooled_s.mu,
            "note": "single-direction degrees; the closed forms are applied to the chosen direction"
            if g.directed else "undirected degrees",
        }
    _dump(_clean(result), out / "fig1_summary.json")
    return result


def _sir_params(cfg: ExperimentConfig) -> SirParams:
    sp = cfg.params.get("sir", {})
    return SirParams(lam=float(sp.get("lambda", 0.1)), gamma_rec=float(sp.get("gamma_rec", 0.01)),
                     n_cascades=int(sp.get("n_cascades", 10)), t_end=int(sp.get("t_end", 10_000)),
                     seed=int(sp.get("seed", cfg.seed)), transmission=sp.get("transmission", "per-node"))


def run_fig2a(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    g, _, info = _graph(cfg)
    trace = simulate_sir(g, _sir_params(cfg))
    trace.to_csv(out / "trace.csv")
    source = source_from_trace(g, trace)
    sizes = p.get("sizes", [62, 125, 312, 625, 1250, 2500, 6250])
    rows = size_sweep(source, sizes, int(p.get("replicates", 50)), cfg.seed, _spec(p), threads=cfg.threads)
    sweep_table_csv(rows, out / "fig2a_sweep.csv")
    result = {"graph": info, "seeds": trace.seeds, "infected": int((trace.first_infection_time >= 0).sum()),
              "sizes": {str(r.size): r.summary.as_dict() for r in rows}}
    _dump(_clean(result), out / "fig2a_summary.json")
    return result


def _candidate_tags(cfg: ExperimentConfig, stream) -> list[str]:
    p = cfg.params
    if p.get("tags"):
        return [t.casefold() for t in p["tags"]]
    if "born" in p:
        b = p["born"]
        return born_tags(stream, int(b.get("quiet_days", 25)), int(b.get("min_total_uses", 20_000)),
                         int(p.get("bucket", DAY)))
    top = int(p.get("top_tags", 0))
    names = stream.tag_names()
    if top:
        users = tag_stats(stream)["users"]
        order = sorted(range(len(names)), key=lambda i: (-users[i], names[i]))[:top]
        return [names[i] for i in order]
    return sorted(names)


def run_fig2bc(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    g, ids, info = _graph(cfg)
    stream = _events(cfg, ids)
    tags = _candidate_tags(cfg, stream)
    bucket = int(p.get("bucket", DAY))
    source = source_from_events(stream, g, tags, network="full", bucket=bucket)
    replicates = int(p.get("replicates", 30))
    result = {"graph": info, "tags": len(tags), "load": vars(stream.report)}
    sizes = p.get("sizes")
    if sizes:
        rows = size_sweep(source, sizes, replicates, cfg.seed, _spec(p), threads=cfg.threads)
        sweep_table_csv(rows, out / "fig2b_sweep.csv")
        result["sweep"] = {str(r.size): {"pooled": r.summary.as_dict(),
                                         "per_tag": {t: s.mean for t, s in sorted(r.per_item.items())}}
                           for r in rows}
    per_tag = p.get("per_tag")
    if per_tag:
        spec = _spec(per_tag)
        min_samples = int(per_tag.get("min_samples", 1))
        table = lead_time_table(source, spec, int(per_tag.get("replicates", 5)), cfg.seed, tags,
                                threads=cfg.threads, min_replicates=min_samples)
        with open(out / "fig2c_per_tag.csv", "w", encoding="utf-8") as fh:
            fh.write("tag,samples,mean,sem,fraction_negative\n")
            for t in sorted(table):
                fh.write(_summary_row(t, table[t]))
        means = np.array([table[t].mean for t in sorted(table)])
        result["per_tag"] = {"tags": len(table), "mean_of_means": float(means.mean()) if len(means) else None,
                             "sem_of_means": float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else None,
                             "fraction_negative": float(np.mean(means < 0)) if len(means) else None}
    _dump(_clean(result), out / "fig2bc_summary.json")
    return result


def run_fig3(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    g, ids, info = _graph(cfg)
    stream = _events(cfg, ids)
    tags = _candidate_tags(cfg, stream)
    bucket = int(p.get("bucket", DAY))
    replicates = int(p.get("replicates", 1000))
    null_replicates = int(p.get("null_replicates", replicates))
    spec = _spec(p, fraction=float(p.get("fraction", 0.05)) if p.get("size") is None else None)
    alpha = float(p.get("alpha", 0.05))
    consecutive = int(p.get("consecutive_required", 2))
    scope = p.get("shuffle_scope", "tag")
    rows, per_tag = [], {}
    for tag in tags:
        entry = {}
        try:
            source = source_from_events(stream, g, tag, network="hashtag", bucket=bucket)
        except ValueError as exc:
            per_tag[tag] = {"error": str(exc)}
            continue
        comps = connected_components(source.graph)
        entry["users"] = source.graph.node_count
        entry["giant_fraction"] = comps.giant_fraction
        entry["component_count"] = comps.component_count
        try:
            obs = lead_time_experiment(source, spec, replicates, cfg.seed, threads=cfg.threads)
            null = shuffle_null(stream, tag, g, spec, null_replicates, cfg.seed, network="hashtag",
                                scope=scope, bucket=bucket, observed=obs.mean, threads=cfg.threads)
        except (NoAnalyzableReplicates, ValueError) as exc:
            entry["error"] = str(exc)
            per_tag[tag] = entry
            continue
        entry["observed"] = obs.as_dict()
        entry["null"] = null.as_dict()
        # raw timestamps, so day boundaries are not blurred by rescaling
        times = first_use_array(tag_timeline(stream, tag), g.node_count)[source.node_ids]
        try:
            control, sensor = draw_groups(source.graph, spec, replicate_rng(cfg.seed, 0))
            det = realtime_detect(times, sensor, control, stream.window, bucket, alpha, consecutive)
            det.to_csv(out / f"incidence_{_safe(tag)}.csv")
            entry["detection"] = det.as_dict()
        except ValueError as exc:
            entry["detection"] = {"error": str(exc)}
        per_tag[tag] = entry
        d = entry["detection"]
        rows.append((tag, entry["users"], comps.giant_fraction, obs, null, d.get("detection_day"),
                     d.get("peak_incidence_day"), d.get("control_catch_up_day")))
    with open(out / "fig3_tags.csv", "w", encoding="utf-8") as fh:
        fh.write("tag,users,giant_fraction,replicates,mean,sem,fraction_negative,null_mean,null_sem,"
                 "outside_null,detection_day,peak_incidence_day,control_catch_up_day\n")
        for tag, users, gf, obs, null, dd, pk, cu in rows:
            fh.write(f"{tag},{users},{gf:.12g},{obs.n},{obs.mean:.12g},{obs.sem:.12g},{obs.fraction_negative:.12g},"
                     f"{null.mean:.12g},{null.sem:.12g},{int(null.outside())},{_opt(dd)},{_opt(pk)},{_opt(cu)}\n")
    fn = [r[3].fraction_negative for r in rows]
    outside = [r[4].outside() for r in rows]
    result = {"graph": info, "tags": per_tag,
              "aggregate": {"tags_analyzed": len(rows),
                            "mean_fraction_negative": float(np.mean(fn)) if fn else None,
                            "fraction_outside_null": float(np.mean(outside)) if outside else None}}
    _dump(_clean(result), out / "fig3_summary.json")
    return result


def _opt(x) -> str:
    return "" if x is None else str(x)


def _safe(tag: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in tag)


def run_fig4(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    g, ids, info = _graph(cfg)
    stream = _events(cfg, ids)
    messages = load_messages(cfg.path("messages"), stream.user_ids, p.get("window")) if p.get("messages") else None
    rng = replicate_rng(cfg.seed, 0)
    size = _spec(p).resolve_size(g.node_count)
    control = sample_control(g, size, rng)
    if p.get("trim_to_active", True):
        control = NodeSample(trim_to_active(stream, control), control.origin, control.policy, gamma=control.gamma,
                             requested_size=control.requested_size)
    sensor = sample_sensors(g, control, p.get("policy", PER_NODE_FRIEND), p.get("direction", "in"),
                            target_size=len(control), seed=rng)
    if p.get("remove_overlap", True):
        control = remove_overlap(control, sensor)
    result = {"graph": info, "control_size": len(control), "sensor_size": len(sensor), "groups": {}}
    for name, sample in (("control", control), ("sensor", sensor)):
        prof = activity_profile(stream, sample, messages)
        with open(out / f"activity_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("user,total_messages,tagged_messages,tag_uses,unique_tags\n")
            for row in prof.rows():
                fh.write(",".join(str(v) for v in row) + "\n")
        with open(out / f"diversity_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("messages_lo,messages_hi,users,unique_tags_mean,unique_tags_sem\n")
            for b in prof.diversity_by_activity():
                fh.write(f"{b['messages_lo']:g},{b['messages_hi']:g},{b['users']},"
                         f"{b['unique_tags_mean']:.12g},{b['unique_tags_sem']:.12g}\n")
        group = {"activity": prof.aggregate(), "absent": prof.absent,
                 "in_degree_mean": float(g.degrees("in")[sample.members].mean()) if len(sample) else None,
                 "out_degree_mean": float(g.degrees("out")[sample.members].mean()) if len(sample) else None}
        result["groups"][name] = group
    cap = p.get("betweenness_cap")
    if cap is not None and g.node_count <= int(cap):
        bc = betweenness(g, int(cap))
        arr = np.array([bc[v] for v in range(g.node_count)])
        for name, sample in (("control", control), ("sensor", sensor)):
            result["groups"][name]["betweenness_mean"] = float(arr[sample.members].mean()) if len(sample) else None
    _dump(_clean(result), out / "fig4_summary.json")
    return result


def run_samplemath(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.params
    N, S = int(p["N"]), int(p["S"])
    x_s, n_s = int(p.get("x_s", 10)), int(p.get("n_s", 5))
    s_values = p.get("s_values", list(range(1, n_s + 1)))
    if "X_grid" in p:
        X_grid = [int(x) for x in p["X_grid"]]
    else:
        lo, hi, num = p.get("X_range", [1, N, 60])
        X_grid = grid(int(lo), int(hi), int(num)).tolist()
    result = {"N": N, "S": S, "x_s": x_s, "n_s": n_s, "curves": {}}
    for s in s_values:
        design = DetectionDesign(N, S, x_s, n_s, int(s))
        curve = detection_curve(design, X_grid)
        detection_curve_csv(curve, out / f"detection_s{s}.csv")
        result["curves"][str(s)] = {"X_for_half": next((X for X, pr in curve if pr >= 0.5), None)}
    _dump(_clean(result), out / "samplemath_summary.json")
    return result


RUNNERS = {"fig1": run_fig1, "fig2a": run_fig2a, "fig2bc": run_fig2bc, "fig3": run_fig3,
           "fig4": run_fig4, "samplemath": run_samplemath}


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment into ``cfg.out``; data files go to a staging directory first."""
    validate(cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    staging = Path(tempfile.mkdtemp(prefix=".sensornet-", dir=cfg.out.parent))
    try:
        RUNNERS[cfg.kind](cfg, staging)
        manifest = {
            "config": cfg.echo(),
            "tool_version": __version__,
            "threads": cfg.threads,
            "wall_time_s": round(time.perf_counter() - started, 3),
            "inputs": {k: {"path": str(v), "sha256": _digest(v)} for k, v in sorted(cfg.inputs().items())},
            "outputs": sorted(f.name for f in staging.iterdir()),
        }
        _dump(manifest, staging / "manifest.json")
        cfg.out.mkdir(parents=True, exist_ok=True)
        for f in sorted(staging.iterdir()):
            shutil.move(str(f), str(cfg.out / f.name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return EXIT_OK
