"""Timestamped adoption events: ingestion, per-tag timelines, hashtag networks, activity."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, IdMap

DAY = 86_400
MAX_MALFORMED_FRACTION = 0.01


class EventError(ValueError):
    pass


@dataclass
class LoadReport:
    lines: int = 0
    records: int = 0
    malformed: int = 0
    out_of_window: int = 0
    comments: int = 0


@dataclass
class EventStream:
    """Records sorted by timestamp (stable), with dense user and tag ids."""

    users: np.ndarray
    tags: np.ndarray
    times: np.ndarray
    window: tuple[int, int]
    tag_ids: IdMap
    user_ids: IdMap
    report: LoadReport = field(default_factory=LoadReport)

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.int64)
        order = np.argsort(self.times, kind="stable")
        self.users, self.tags, self.times = self.users[order], self.tags[order], self.times[order]

    def __len__(self) -> int:
        return len(self.times)

    def tag_id(self, tag: str) -> int:
        idx = self.tag_ids.get(tag.casefold())
        if idx is None:
            raise EventError(f"unknown tag {tag!r}")
        return idx

    def tag_names(self) -> list[str]:
        return [self.tag_ids.external(i) for i in range(len(self.tag_ids))]

    def with_times(self, times: np.ndarray) -> "EventStream":
        return EventStream(self.users, self.tags, times, self.window, self.tag_ids, self.user_ids, self.report)


def parse_window(window) -> tuple[int, int]:
    start, end = (int(x) for x in window)
    if end < start:
        raise EventError(f"window end {end} precedes start {start}")
    return start, end


def load_events(path, window=None, users: IdMap | None = None, chunk_lines: int | None = None) -> EventStream:
    """Read a ``user<TAB>tag<TAB>unix_seconds`` file.

    Tags are case-folded. Records outside ``window`` are dropped and counted;
    more than 1% malformed lines is an error. Passing the follow graph's
    ``IdMap`` as ``users`` keeps user ids aligned with graph node ids. With
    ``chunk_lines`` set, lines are parsed in chunks and merged by timestamp.
    """
    users = IdMap() if users is None else users
    tags = IdMap()
    win = parse_window(window) if window is not None else None
    rep = LoadReport()
    parts_u, parts_t, parts_s = [], [], []

    def flush(buf):
        u, t, s = [], [], []
        for line in buf:
            fields = line.split("\t")
            if len(fields) != 3 or not fields[0] or not fields[1]:
                rep.malformed += 1
                continue
            try:
                ts = int(fields[2])
            except ValueError:
                rep.malformed += 1
                continue
            if win is not None and not win[0] <= ts <= win[1]:
                rep.out_of_window += 1
                continue
            u.append(users.add(fields[0]))
            t.append(tags.add(fields[1].casefold()))
            s.append(ts)
        parts_u.append(np.array(u, dtype=np.int64))
        parts_t.append(np.array(t, dtype=np.int64))
        parts_s.append(np.array(s, dtype=np.int64))

    buf = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise EventError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line in fh:
            rep.lines += 1
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                rep.comments += 1
                continue
            buf.append(line)
            if chunk_lines and len(buf) >= chunk_lines:
                flush(buf)
                buf = []
    if buf:
        flush(buf)
    data_lines = rep.lines - rep.comments
    u = np.concatenate(parts_u) if parts_u else np.empty(0, np.int64)
    if data_lines == 0 or (len(u) == 0 and rep.out_of_window == 0):
        raise EventError(f"{path}: no event records")
    if rep.malformed > MAX_MALFORMED_FRACTION * data_lines:
        raise EventError(f"{path}: {rep.malformed} of {data_lines} lines malformed (limit 1%)")
    s = np.concatenate(parts_s)
    rep.records = len(u)
    if win is None:
        win = (int(s.min()), int(s.max()))
    return EventStream(u, np.concatenate(parts_t), s, win, tags, users, rep)


def write_events(stream: EventStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# window {stream.window[0]} {stream.window[1]}\n")
        for u, t, s in zip(stream.users, stream.tags, stream.times):
            fh.write(f"{stream.user_ids.external(u)}\t{stream.tag_ids.external(t)}\t{int(s)}\n")


def load_messages(path, users: IdMap, window=None) -> np.ndarray:
    """Per-user message counts from a ``user<TAB>unix_seconds`` file, indexed by dense id."""
    win = parse_window(window) if window is not None else None
    counts: Counter[int] = Counter()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                continue
            ts = int(parts[1])
            if win is not None and not win[0] <= ts <= win[1]:
                continue
            counts[users.add(parts[0])] += 1
    out = np.zeros(len(users), dtype=np.int64)
    for u, c in counts.items():
        out[u] = c
    return out


@dataclass(frozen=True)
class TagTimeline:
    tag: int
    users: np.ndarray
    first_use: np.ndarray
    total_uses: int

    @property
    def unique_users(self) -> int:
        return len(self.users)

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.users.tolist(), self.first_use.tolist()))


def tag_timeline(stream: EventStream, tag) -> TagTimeline:
    tid = stream.tag_id(tag) if isinstance(tag, str) else int(tag)
    if not 0 <= tid < len(stream.tag_ids):
        raise EventError(f"unknown tag id {tid}")
    mask = stream.tags == tid
    u = stream.users[mask]
    t = stream.times[mask]
    # records are time-sorted, so the first occurrence of each user is its minimum
    users, first_idx = np.unique(u, return_index=True)
    return TagTimeline(tid, users, t[first_idx], int(mask.sum()))


def first_use_array(timeline: TagTimeline, node_count: int, origin: float = 0.0, unit: float = 1.0) -> np.ndarray:
    """Dense float array of first-use times ((t - origin) / unit); NaN where unused."""
    out = np.full(node_count, np.nan)
    keep = timeline.users < node_count
    out[timeline.users[keep]] = (timeline.first_use[keep] - origin) / unit
    return out


def tag_stats(stream: EventStream) -> dict[str, np.ndarray]:
    n_tags = len(stream.tag_ids)
    uses = np.bincount(stream.tags, minlength=n_tags)
    first = np.full(n_tags, np.iinfo(np.int64).max)
    np.minimum.at(first, stream.tags, stream.times)
    pairs = np.unique(np.column_stack([stream.tags, stream.users]), axis=0) if len(stream) else np.empty((0, 2), np.int64)
    users = np.bincount(pairs[:, 0], minlength=n_tags)
    return {"uses": uses, "first": first, "users": users}


def born_tags(stream: EventStream, quiet_days: int = 25, min_total_uses: int = 20_000, day: int = DAY) -> list[str]:
    """Tags first seen at least ``quiet_days`` after the window start and used at least ``min_total_uses`` times."""
    if quiet_days < 0:
        raise EventError("quiet_days must be non-negative")
    st = tag_stats(stream)
    cutoff = stream.window[0] + quiet_days * day
    keep = (st["first"] >= cutoff) & (st["uses"] >= min_total_uses) & (st["uses"] > 0)
    return [stream.tag_ids.external(i) for i in np.flatnonzero(keep)]


@dataclass(frozen=True)
class PopularityHistogram:
    users_per_tag: np.ndarray
    tag_counts: np.ndarray

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.users_per_tag.tolist(), self.tag_counts.tolist()))

    def loglog(self) -> np.ndarray:
        return np.column_stack([np.log10(self.users_per_tag), np.log10(self.tag_counts)])

    def raw(self) -> np.ndarray:
        return np.repeat(self.users_per_tag, self.tag_counts)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("users,tags,log10_users,log10_tags\n")
            for x, c in zip(self.users_per_tag, self.tag_counts):
                fh.write(f"{int(x)},{int(c)},{np.log10(x):.12g},{np.log10(c):.12g}\n")


def popularity_histogram(stream: EventStream) -> PopularityHistogram:
    if len(stream) == 0:
        raise EventError("empty stream")
    users = tag_stats(stream)["users"]
    users = users[users > 0]
    x, c = np.unique(users, return_counts=True)
    return PopularityHistogram(x, c)


def hashtag_network(stream: EventStream, graph: Graph, tag) -> tuple[Graph, np.ndarray]:
    """Induced follow subgraph on the tag's users; also returns the graph ids of its nodes."""
    tl = tag_timeline(stream, tag)
    members = tl.users[tl.users < graph.node_count]
    if len(members) == 0:
        raise EventError(f"no user of tag {tag!r} is in the follow graph")
    return graph.subgraph(members)


@dataclass
class ActivityProfile:
    users: np.ndarray
    total_messages: np.ndarray
    tagged_messages: np.ndarray
    tag_uses: np.ndarray
    unique_tags: np.ndarray
    absent: int = 0

    COLUMNS = ("total_messages", "tagged_messages", "tag_uses", "unique_tags")

    def rows(self):
        return zip(self.users.tolist(), *(getattr(self, c).tolist() for c in self.COLUMNS))

    def aggregate(self) -> dict[str, dict[str, float]]:
        out = {}
        for c in self.COLUMNS:
            out[c] = _mean_sem(getattr(self, c))
        active = self.unique_tags > 0
        out["uses_per_unique_tag"] = _mean_sem(self.tag_uses[active] / self.unique_tags[active])
        return out

    def diversity_by_activity(self, base: float = 2.0) -> list[dict]:
        """Mean unique tags per user within log-``base`` buckets of total messages."""
        msgs = self.total_messages
        ok = msgs > 0
        bucket = np.floor(np.log(msgs[ok]) / np.log(base)).astype(np.int64)
        out = []
        for b in np.unique(bucket):
            sel = self.unique_tags[ok][bucket == b]
            stats = _mean_sem(sel)
            out.append({"messages_lo": base ** int(b), "messages_hi": base ** (int(b) + 1),
                        "users": int(len(sel)), **{f"unique_tags_{k}": v for k, v in stats.items()}})
        return out


def _mean_sem(x) -> dict[str, float]:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return {"mean": float("nan"), "sem": float("nan"), "n": 0}
    sem = float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
    return {"mean": float(np.mean(x)), "sem": sem, "n": int(len(x))}


def activity_profile(stream: EventStream, sample, messages: np.ndarray | None = None) -> ActivityProfile:
    """Per-user activity and tag diversity for the members of ``sample``.

    A tagged message is identified by its (user, timestamp) pair. Without a
    message-count array, total messages fall back to tagged messages. Sample
    members with no records count as zero-activity users.
    """
    members = np.asarray(getattr(sample, "members", sample), dtype=np.int64)
    n_users = max(len(stream.user_ids), int(members.max()) + 1 if len(members) else 0)
    uses = np.bincount(stream.users, minlength=n_users)
    ut = np.unique(np.column_stack([stream.users, stream.tags]), axis=0)
    uniq = np.bincount(ut[:, 0], minlength=n_users)
    us = np.unique(np.column_stack([stream.users, stream.times]), axis=0)
    tagged = np.bincount(us[:, 0], minlength=n_users)
    if messages is not None:
        total = np.zeros(n_users, dtype=np.int64)
        total[:len(messages)] = messages[:n_users]
        total = np.maximum(total, tagged)
    else:
        total = tagged
    absent = int(np.count_nonzero(uses[members] == 0))
    return ActivityProfile(members, total[members], tagged[members], uses[members], uniq[members], absent)


def trim_to_active(stream: EventStream, sample):
    """Members of ``sample`` that used at least one tag."""
    members = np.asarray(getattr(sample, "members", sample), dtype=np.int64)
    active = np.zeros(max(len(stream.user_ids), int(members.max()) + 1), dtype=bool)
    active[stream.users] = True
    return members[active[members]]
