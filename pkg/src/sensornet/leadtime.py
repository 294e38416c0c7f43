"""Sensor-versus-control lead times, the shuffle null, and day-by-day detection."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .cascade import CascadeTrace
from .events import DAY, EventStream, first_use_array, tag_timeline
from .graph import Graph
from .paradox import (POOLED_NEIGHBORS, NodeSample, SamplingError, remove_overlap,
                      sample_control, sample_sensors)

STEPS = "steps"
DAYS = "days"


class InsufficientInfections(ValueError):
    def __init__(self, side: str):
        super().__init__(f"insufficient infections in the {side} group")
        self.side = side


class NoAnalyzableReplicates(ValueError):
    pass


def delta_t(sensor_times, control_times) -> float:
    """Mean sensor adoption time minus mean control adoption time; negative means sensors lead."""
    s = np.asarray(sensor_times, dtype=float)
    c = np.asarray(control_times, dtype=float)
    if len(s) == 0:
        raise InsufficientInfections("sensor")
    if len(c) == 0:
        raise InsufficientInfections("control")
    return float(s.mean() - c.mean())


@dataclass
class AdoptionSource:
    """A graph to sample from plus per-item adoption times on its nodes (NaN = never)."""

    graph: Graph
    times: dict[str, np.ndarray]
    unit: str = STEPS
    node_ids: np.ndarray | None = None

    def item_times(self, item: str | None = None) -> np.ndarray:
        if item is None:
            if len(self.times) != 1:
                raise ValueError("source holds several items; name one")
            return next(iter(self.times.values()))
        return self.times[item]


def source_from_trace(graph: Graph, trace: CascadeTrace, item: str = "cascade") -> AdoptionSource:
    if trace.node_count != graph.node_count:
        raise ValueError("trace and graph disagree on node count")
    return AdoptionSource(graph, {item: trace.times()}, STEPS)


def source_from_events(stream: EventStream, graph: Graph, tags=None, network: str = "full",
                       bucket: int = DAY) -> AdoptionSource:
    """Adoption times in ``bucket`` units since the window start.

    ``network="full"`` samples from the whole follow graph; ``"hashtag"`` samples
    from the follow subgraph induced on a single tag's users.
    """
    tags = stream.tag_names() if tags is None else [t.casefold() for t in ([tags] if isinstance(tags, str) else tags)]
    origin = stream.window[0]
    if network == "full":
        times = {t: first_use_array(tag_timeline(stream, t), graph.node_count, origin, bucket) for t in tags}
        return AdoptionSource(graph, times, DAYS)
    if network == "hashtag":
        if len(tags) != 1:
            raise ValueError("a hashtag network is built for exactly one tag")
        tl = tag_timeline(stream, tags[0])
        sub, ids = graph.subgraph(tl.users[tl.users < graph.node_count])
        if sub.node_count == 0:
            raise ValueError(f"no user of tag {tags[0]!r} is in the follow graph")
        full = first_use_array(tl, graph.node_count, origin, bucket)
        return AdoptionSource(sub, {tags[0]: full[ids]}, DAYS, node_ids=ids)
    raise ValueError(f"unknown network kind {network!r}")


@dataclass(frozen=True)
class SamplingSpec:
    size: int | None = None
    fraction: float | None = None
    policy: str = POOLED_NEIGHBORS
    direction: str = "out"
    min_infected: int = 1
    threshold: float = 0.0
    remove_overlap: bool = False
    sensors_are_control: bool = False

    def resolve_size(self, node_count: int) -> int:
        if self.size is not None:
            return int(self.size)
        if self.fraction is None:
            raise ValueError("sampling needs a size or a fraction")
        return max(1, int(round(self.fraction * node_count)))


def draw_groups(graph: Graph, spec: SamplingSpec, rng: np.random.Generator) -> tuple[NodeSample, NodeSample]:
    size = spec.resolve_size(graph.node_count)
    control = sample_control(graph, size, rng)
    if spec.sensors_are_control:
        return control, control
    sensor = sample_sensors(graph, control, spec.policy, spec.direction, target_size=size, seed=rng)
    if spec.remove_overlap:
        control = remove_overlap(control, sensor)
    return control, sensor


def replicate_rng(seed, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


@dataclass
class ReplicateRecord:
    index: int
    control_size: int = 0
    sensor_size: int = 0
    deltas: dict = field(default_factory=dict)
    infected: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)


def _evaluate(times: np.ndarray, control: NodeSample, sensor: NodeSample, spec: SamplingSpec):
    tc = times[control.members]
    ts = times[sensor.members]
    tc = tc[~np.isnan(tc)]
    ts = ts[~np.isnan(ts)]
    counts = (len(ts), len(tc))
    if len(tc) < spec.min_infected:
        return None, counts, "control_below_min_infected"
    if len(ts) < spec.min_infected:
        return None, counts, "sensor_below_min_infected"
    if spec.threshold > 0 and len(tc) <= spec.threshold * len(control):
        return None, counts, "below_usage_threshold"
    return delta_t(ts, tc), counts, None


def _run_replicate(source: AdoptionSource, spec: SamplingSpec, seed, index: int, items) -> ReplicateRecord:
    rec = ReplicateRecord(index)
    try:
        control, sensor = draw_groups(source.graph, spec, replicate_rng(seed, index))
    except SamplingError as exc:
        rec.skipped = {item: f"sampling_failed: {exc}" for item in items}
        return rec
    rec.control_size, rec.sensor_size = len(control), len(sensor)
    for item in items:
        d, counts, why = _evaluate(source.times[item], control, sensor, spec)
        rec.infected[item] = counts
        if why is None:
            rec.deltas[item] = d
        else:
            rec.skipped[item] = why
    return rec


def _map(fn, indices, threads: int):
    if threads <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))


def _json_float(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


@dataclass
class LeadTimeSummary:
    deltas: np.ndarray
    replicate_index: np.ndarray
    control_sizes: np.ndarray
    sensor_sizes: np.ndarray
    control_infected: np.ndarray
    sensor_infected: np.ndarray
    requested: int
    skipped: dict[str, int]
    unit: str = STEPS

    @property
    def n(self) -> int:
        return len(self.deltas)

    @property
    def mean(self) -> float:
        return float(np.mean(self.deltas))

    @property
    def sd(self) -> float:
        return float(np.std(self.deltas, ddof=1)) if self.n > 1 else float("nan")

    @property
    def sem(self) -> float:
        return self.sd / math.sqrt(self.n) if self.n > 1 else float("nan")

    @property
    def fraction_negative(self) -> float:
        return float(np.mean(self.deltas < 0))

    def as_dict(self) -> dict:
        return {
            "unit": self.unit,
            "replicates_requested": self.requested,
            "replicates_analyzed": self.n,
            "skipped": dict(sorted(self.skipped.items())),
            "mean": _json_float(self.mean),
            "sem": _json_float(self.sem),
            "fraction_negative": self.fraction_negative,
            "delta_t": self.deltas.tolist(),
            "replicate_index": self.replicate_index.tolist(),
            "control_size": self.control_sizes.tolist(),
            "sensor_size": self.sensor_sizes.tolist(),
            "control_infected": self.control_infected.tolist(),
            "sensor_infected": self.sensor_infected.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _summarize(records: list[ReplicateRecord], item: str, requested: int, unit: str) -> LeadTimeSummary:
    rows = [r for r in records if item in r.deltas]
    skipped: dict[str, int] = {}
    for r in records:
        why = r.skipped.get(item)
        if why is not None:
            key = why.split(":")[0]
            skipped[key] = skipped.get(key, 0) + 1
    return LeadTimeSummary(
        deltas=np.array([r.deltas[item] for r in rows], dtype=float),
        replicate_index=np.array([r.index for r in rows], dtype=np.int64),
        control_sizes=np.array([r.control_size for r in rows], dtype=np.int64),
        sensor_sizes=np.array([r.sensor_size for r in rows], dtype=np.int64),
        control_infected=np.array([r.infected[item][1] for r in rows], dtype=np.int64),
        sensor_infected=np.array([r.infected[item][0] for r in rows], dtype=np.int64),
        requested=requested, skipped=skipped, unit=unit)


def lead_time_records(source: AdoptionSource, spec: SamplingSpec, replicates: int, seed,
                      items=None, threads: int = 1) -> list[ReplicateRecord]:
    """Per-replicate records; one control/sensor draw per replicate is shared by all items."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    if spec.min_infected < 1:
        raise ValueError("min_infected must be at least 1")
    items = list(source.times) if items is None else list(items)
    return _map(lambda i: _run_replicate(source, spec, seed, i, items), range(replicates), threads)


def lead_time_experiment(source: AdoptionSource, spec: SamplingSpec, replicates: int, seed,
                         item: str | None = None, threads: int = 1) -> LeadTimeSummary:
    if item is None:
        source.item_times(None)
        item = next(iter(source.times))
    records = lead_time_records(source, spec, replicates, seed, [item], threads)
    summary = _summarize(records, item, replicates, source.unit)
    if summary.n == 0:
        raise NoAnalyzableReplicates(f"no analyzable replicates for {item!r}: {summary.skipped}")
    return summary


def lead_time_table(source: AdoptionSource, spec: SamplingSpec, replicates: int, seed,
                    items=None, threads: int = 1, min_replicates: int = 1) -> dict[str, LeadTimeSummary]:
    """Per-item summaries; items analyzable in fewer than ``min_replicates`` replicates are dropped."""
    items = list(source.times) if items is None else list(items)
    records = lead_time_records(source, spec, replicates, seed, items, threads)
    out = {}
    for item in items:
        s = _summarize(records, item, replicates, source.unit)
        if s.n >= max(1, min_replicates):
            out[item] = s
    return out


@dataclass
class SweepRow:
    size: int
    summary: LeadTimeSummary
    per_item: dict[str, LeadTimeSummary]


def size_sweep(source: AdoptionSource, sizes, replicates: int, seed, spec: SamplingSpec | None = None,
               threshold: float | None = None, items=None, threads: int = 1) -> list[SweepRow]:
    """Lead-time summaries at each control size.

    Items are kept in a replicate only if more than ``threshold`` of the control
    sample adopted them. ``summary`` pools every (replicate, item) lead time.
    """
    sizes = list(sizes)
    if not sizes:
        raise ValueError("sizes must be non-empty")
    base = spec or SamplingSpec()
    if threshold is not None:
        base = replace(base, threshold=threshold)
    items = list(source.times) if items is None else list(items)
    rows = []
    for size in sizes:
        s_spec = replace(base, size=int(size), fraction=None)
        records = lead_time_records(source, s_spec, replicates, seed, items, threads)
        per_item = {it: _summarize(records, it, replicates, source.unit) for it in items}
        if len(items) == 1:
            pooled = per_item[items[0]]
        else:
            pooled = _pool(list(per_item.values()), replicates, source.unit)
        if pooled.n == 0:
            raise NoAnalyzableReplicates(f"no analyzable replicates at size {size}: {pooled.skipped}")
        rows.append(SweepRow(int(size), pooled, {k: v for k, v in per_item.items() if v.n}))
    return rows


def _pool(parts: list[LeadTimeSummary], requested: int, unit: str) -> LeadTimeSummary:
    skipped: dict[str, int] = {}
    for p in parts:
        for k, v in p.skipped.items():
            skipped[k] = skipped.get(k, 0) + v
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts]) if parts else np.empty(0)
    return LeadTimeSummary(cat("deltas").astype(float), cat("replicate_index").astype(np.int64),
                           cat("control_sizes").astype(np.int64), cat("sensor_sizes").astype(np.int64),
                           cat("control_infected").astype(np.int64), cat("sensor_infected").astype(np.int64),
                           requested * max(1, len(parts)), skipped, unit)


def sweep_table_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("size,replicates,items,mean,sem,fraction_negative\n")
        for r in rows:
            s = r.summary
            fh.write(f"{r.size},{s.n},{len(r.per_item)},{s.mean:.12g},{s.sem:.12g},{s.fraction_negative:.12g}\n")


# --- shuffle null -----------------------------------------------------------

TAG_SCOPE = "tag"
GLOBAL_SCOPE = "global"


@dataclass
class NullSummary:
    deltas: np.ndarray
    requested: int
    skipped: dict[str, int]
    observed: float | None = None

    @property
    def n(self) -> int:
        return len(self.deltas)

    @property
    def mean(self) -> float:
        return float(np.mean(self.deltas))

    @property
    def sem(self) -> float:
        return float(np.std(self.deltas, ddof=1) / math.sqrt(self.n)) if self.n > 1 else float("nan")

    def band(self, level: float = 0.95) -> tuple[float, float]:
        lo = (1.0 - level) / 2.0
        q = np.quantile(self.deltas, [lo, 1.0 - lo])
        return float(q[0]), float(q[1])

    def percentile(self, value: float | None = None) -> float:
        """Fraction of null lead times at or below ``value`` (default: the observed mean)."""
        value = self.observed if value is None else value
        return float(np.mean(self.deltas <= value))

    def p_two_sided(self, value: float | None = None) -> float:
        value = self.observed if value is None else value
        lo = np.mean(self.deltas <= value)
        hi = np.mean(self.deltas >= value)
        return float(min(1.0, 2.0 * min(lo, hi)))

    def outside(self, value: float | None = None, level: float = 0.95) -> bool:
        value = self.observed if value is None else value
        lo, hi = self.band(level)
        return bool(value < lo or value > hi)

    def as_dict(self) -> dict:
        d = {"replicates_requested": self.requested, "replicates_analyzed": self.n,
             "skipped": dict(sorted(self.skipped.items())), "mean": self.mean,
             "sem": _json_float(self.sem), "band95": list(self.band()), "delta_t": self.deltas.tolist()}
        if self.observed is not None:
            d.update(observed_mean=self.observed, percentile=self.percentile(),
                     p_two_sided=self.p_two_sided(), outside_band95=self.outside())
        return d

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def shuffled_records(stream: EventStream, tag: str, rng: np.random.Generator,
                     scope: str = TAG_SCOPE) -> tuple[np.ndarray, np.ndarray]:
    """The tag's ``(users, times)`` records with timestamps randomly reassigned.

    Every user keeps its record count; only which timestamp lands on which
    record changes. ``scope="global"`` draws replacement times from the whole
    stream instead of from the tag's own records.
    """
    tid = stream.tag_id(tag)
    mask = stream.tags == tid
    users = stream.users[mask]
    if scope == TAG_SCOPE:
        return users, rng.permutation(stream.times[mask])
    if scope == GLOBAL_SCOPE:
        return users, rng.permutation(stream.times)[mask]
    raise ValueError(f"unknown shuffle scope {scope!r}")


def shuffled_first_use(stream: EventStream, tag: str, rng: np.random.Generator,
                       scope: str = TAG_SCOPE) -> tuple[np.ndarray, np.ndarray]:
    """Per-user first use of the tag after a timestamp shuffle, as ``(users, first_use)``."""
    users, times = shuffled_records(stream, tag, rng, scope)
    uniq, inv = np.unique(users, return_inverse=True)
    first = np.full(len(uniq), np.iinfo(np.int64).max)
    np.minimum.at(first, inv, times)
    return uniq, first


def shuffle_null(stream: EventStream, tag: str, graph: Graph, spec: SamplingSpec, replicates: int, seed,
                 network: str = "hashtag", scope: str = TAG_SCOPE, bucket: int = DAY,
                 observed: float | None = None, threads: int = 1) -> NullSummary:
    """Lead times after randomly reassigning the tag's usage timestamps across its records."""
    base = source_from_events(stream, graph, tag, network=network, bucket=bucket)
    item = next(iter(base.times))
    if np.count_nonzero(~np.isnan(base.times[item])) < 2:
        raise ValueError(f"tag {tag!r} has fewer than two users")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    n_graph = graph.node_count
    origin = stream.window[0]
    # null replicates draw from a substream disjoint from the observed experiment's
    null_seed = np.random.SeedSequence([int(seed), 0x5EED]).generate_state(1)[0]

    def one(i):
        rng = replicate_rng(null_seed, i)
        users, first = shuffled_first_use(stream, tag, rng, scope)
        full = np.full(n_graph, np.nan)
        keep = users < n_graph
        full[users[keep]] = (first[keep] - origin) / bucket
        times = full if base.node_ids is None else full[base.node_ids]
        try:
            control, sensor = draw_groups(base.graph, spec, rng)
        except SamplingError:
            return None, "sampling_failed"
        d, _, why = _evaluate(times, control, sensor, spec)
        return d, why

    results = _map(one, range(replicates), threads)
    deltas = np.array([d for d, why in results if why is None], dtype=float)
    skipped: dict[str, int] = {}
    for _, why in results:
        if why is not None:
            skipped[why] = skipped.get(why, 0) + 1
    if len(deltas) == 0:
        raise NoAnalyzableReplicates(f"no analyzable null replicates: {skipped}")
    return NullSummary(deltas, replicates, skipped, observed)


# --- real-time detection ----------------------------------------------------

PROPORTION_TEST = "proportion"
WELCH_TEST = "welch"


@dataclass
class DetectionReport:
    sensor_cum: np.ndarray
    control_cum: np.ndarray
    sensor_daily: np.ndarray
    control_daily: np.ndarray
    p_values: np.ndarray
    detection_day: int | None
    peak_incidence_day: int
    control_catch_up_day: int | None
    sensor_size: int
    control_size: int
    alpha: float
    consecutive_required: int
    test: str

    @property
    def days(self) -> int:
        return len(self.p_values)

    @property
    def lead_over_peak(self) -> int | None:
        return None if self.detection_day is None else self.peak_incidence_day - self.detection_day

    @property
    def lead_over_catch_up(self) -> int | None:
        if self.detection_day is None or self.control_catch_up_day is None:
            return None
        return self.control_catch_up_day - self.detection_day

    def as_dict(self) -> dict:
        return {"detection_day": self.detection_day, "peak_incidence_day": self.peak_incidence_day,
                "control_catch_up_day": self.control_catch_up_day, "lead_over_peak": self.lead_over_peak,
                "lead_over_catch_up": self.lead_over_catch_up, "sensor_size": self.sensor_size,
                "control_size": self.control_size, "alpha": self.alpha,
                "consecutive_required": self.consecutive_required, "test": self.test, "days": self.days}

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("day,sensor_cum,control_cum,sensor_daily,control_daily,p_value\n")
            for d in range(self.days):
                fh.write(f"{d},{self.sensor_cum[d]:.12g},{self.control_cum[d]:.12g},"
                         f"{int(self.sensor_daily[d])},{int(self.control_daily[d])},{self.p_values[d]:.12g}\n")


def two_proportion_pvalues(x1, n1: int, x2, n2: int) -> np.ndarray:
    """Two-sided pooled two-proportion z-test, elementwise over count arrays."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    se = np.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (p1 - p2) / se, 0.0)
    return np.where(se > 0, 2.0 * stats.norm.sf(np.abs(z)), 1.0)


def _welch_pvalues(ts: np.ndarray, tc: np.ndarray, day_s: np.ndarray, day_c: np.ndarray, days: int) -> np.ndarray:
    out = np.ones(days)
    for d in range(days):
        a = ts[day_s <= d]
        b = tc[day_c <= d]
        if len(a) >= 2 and len(b) >= 2 and (np.ptp(a) > 0 or np.ptp(b) > 0):
            out[d] = stats.ttest_ind(a, b, equal_var=False).pvalue
    return out


def realtime_detect(times: np.ndarray, sensor, control, window, bucket: float = DAY, alpha: float = 0.05,
                    consecutive_required: int = 2, test: str = PROPORTION_TEST) -> DetectionReport:
    """Day-by-day comparison of sensor and control cumulative incidence.

    ``times`` holds absolute adoption times per node (NaN = never). Day ``d``
    covers ``[start + d*bucket, start + (d+1)*bucket)``; each day's p-value
    uses only adoptions up to the end of that day.
    """
    s_members = np.asarray(getattr(sensor, "members", sensor), dtype=np.int64)
    c_members = np.asarray(getattr(control, "members", control), dtype=np.int64)
    if len(s_members) == 0 or len(c_members) == 0:
        raise ValueError("sensor and control samples must be non-empty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if consecutive_required < 1:
        raise ValueError("consecutive_required must be at least 1")
    start, end = window
    span = end - start
    if span < bucket:
        raise ValueError("observation window is shorter than one bucket")
    days = int(math.ceil(span / bucket))

    def day_index(members):
        t = np.asarray(times, dtype=float)[members]
        t = t[~np.isnan(t)]
        t = t[(t >= start) & (t <= end)]
        return t, np.minimum(np.floor((t - start) / bucket).astype(np.int64), days - 1)

    ts, ds = day_index(s_members)
    tc, dc = day_index(c_members)
    s_daily = np.bincount(ds, minlength=days)
    c_daily = np.bincount(dc, minlength=days)
    s_cum_n = np.cumsum(s_daily)
    c_cum_n = np.cumsum(c_daily)
    ns, nc = len(s_members), len(c_members)
    s_cum = s_cum_n / ns
    c_cum = c_cum_n / nc

    if test == PROPORTION_TEST:
        p = two_proportion_pvalues(s_cum_n, ns, c_cum_n, nc)
    elif test == WELCH_TEST:
        p = _welch_pvalues(ts, tc, ds, dc, days)
    else:
        raise ValueError(f"unknown test {test!r}")

    hit = (p < alpha) & (s_cum > c_cum)
    detection = None
    run = 0
    for d in range(days):
        run = run + 1 if hit[d] else 0
        if run >= consecutive_required:
            detection = d - consecutive_required + 1
            break

    peak = int(np.argmax(s_daily + c_daily))
    catch_up = None
    if detection is not None:
        target = s_cum[detection]
        later = np.flatnonzero(c_cum[detection:] >= target)
        if len(later):
            catch_up = int(detection + later[0])
    return DetectionReport(s_cum, c_cum, s_daily, c_daily, p, detection, peak, catch_up, ns, nc,
                           alpha, consecutive_required, test)
