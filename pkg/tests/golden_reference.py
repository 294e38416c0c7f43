"""Brute-force reference for the golden corpus, written with plain Python loops.

Only the group draws reuse the package (``draw_groups`` under the per-replicate
RNG protocol), so both sides compare statistics on the same samples. Parsing,
first use, lead times, null bands, z-tests and the detection rule are all
recomputed here independently.
"""
import json
import math
from pathlib import Path

import numpy as np

from sensornet.graph import build_graph
from sensornet.leadtime import SamplingSpec, draw_groups, replicate_rng

DAY = 86_400
HERE = Path(__file__).parent / "data" / "golden"


def _read(cfg):
    ids = {}

    def dense(name):
        return ids.setdefault(name, len(ids))

    edges = []
    for line in open(HERE / cfg["edges"]):
        if line.startswith("#") or not line.strip():
            continue
        a, b = line.rstrip("\n").split("\t")
        edges.append((dense(a), dense(b)))
    start, end = cfg["window"]
    records = []
    for line in open(HERE / cfg["events"]):
        if line.startswith("#") or not line.strip():
            continue
        u, tag, t = line.rstrip("\n").split("\t")
        t = int(t)
        if start <= t <= end:
            records.append((dense(u), tag.casefold(), t))
    # stable sort by time keeps file order among ties
    records.sort(key=lambda r: r[2])
    return ids, edges, records


def _subgraph(edges, users):
    pos = {u: i for i, u in enumerate(sorted(users))}
    sub = [(pos[a], pos[b]) for a, b in edges if a in pos and b in pos]
    return build_graph(sub, "directed", node_count=len(pos)), sorted(users)


def _delta(times, control, sensor):
    ts = [times[v] for v in sensor if times[v] is not None]
    tc = [times[v] for v in control if times[v] is not None]
    if not ts or not tc:
        return None
    return sum(ts) / len(ts) - sum(tc) / len(tc)


def _quantile(xs, q):
    xs = sorted(xs)
    pos = q * (len(xs) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def _zp(x1, n1, x2, n2):
    p = (x1 + x2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0
    return math.erfc(abs((x1 / n1 - x2 / n2) / se) / math.sqrt(2))


def _detect(first, nodes, control, sensor, start, end, alpha, need):
    days = math.ceil((end - start) / DAY)

    def daily(group):
        counts = [0] * days
        for v in group:
            t = first.get(nodes[v])
            if t is not None:
                counts[min((t - start) // DAY, days - 1)] += 1
        return counts

    sd, cd = daily(sensor), daily(control)
    s_cum, c_cum, hits = [], [], []
    cs = cc = 0
    for d in range(days):
        cs += sd[d]
        cc += cd[d]
        s_cum.append(cs / len(sensor))
        c_cum.append(cc / len(control))
        hits.append(_zp(cs, len(sensor), cc, len(control)) < alpha and s_cum[-1] > c_cum[-1])
    detection = None
    for d in range(days - need + 1):
        if all(hits[d:d + need]):
            detection = d
            break
    combined = [a + b for a, b in zip(sd, cd)]
    peak = combined.index(max(combined))
    catch_up = None
    if detection is not None:
        catch_up = next((d for d in range(detection, days) if c_cum[d] >= s_cum[detection]), None)
    return {"detection_day": detection, "peak_incidence_day": peak, "control_catch_up_day": catch_up}


def reference(cfg):
    ids, edges, records = _read(cfg)
    start, end = cfg["window"]
    spec = SamplingSpec(size=cfg["size"])
    null_seed = np.random.SeedSequence([cfg["seed"], 0x5EED]).generate_state(1)[0]
    out = {}
    for tag in cfg["tags"]:
        recs = [(u, t) for u, tg, t in records if tg == tag]
        first = {}
        for u, t in recs:
            if u not in first or t < first[u]:
                first[u] = t
        graph, nodes = _subgraph(edges, first)
        days = [(first[u] - start) / DAY for u in nodes]

        deltas = []
        for i in range(cfg["replicates"]):
            try:
                control, sensor = draw_groups(graph, spec, replicate_rng(cfg["seed"], i))
            except ValueError:
                continue
            d = _delta(days, control.members.tolist(), sensor.members.tolist())
            if d is not None:
                deltas.append(d)
        mean = sum(deltas) / len(deltas)

        null = []
        stamps = [t for _, t in recs]
        for i in range(cfg["null_replicates"]):
            rng = replicate_rng(null_seed, i)
            perm = rng.permutation(np.array(stamps, dtype=np.int64)).tolist()
            shuffled = {}
            for (u, _), t in zip(recs, perm):
                if u not in shuffled or t < shuffled[u]:
                    shuffled[u] = t
            try:
                control, sensor = draw_groups(graph, spec, rng)
            except ValueError:
                continue
            d = _delta([(shuffled[u] - start) / DAY for u in nodes],
                       control.members.tolist(), sensor.members.tolist())
            if d is not None:
                null.append(d)
        lo, hi = _quantile(null, 0.025), _quantile(null, 0.975)

        control, sensor = draw_groups(graph, spec, replicate_rng(cfg["seed"], 0))
        det = _detect(first, nodes, control.members.tolist(), sensor.members.tolist(), start, end,
                      cfg.get("alpha", 0.05), cfg["consecutive_required"])
        out[tag] = {"users": len(nodes), "replicates": len(deltas), "mean": mean,
                    "fraction_negative": sum(d < 0 for d in deltas) / len(deltas),
                    "null_replicates": len(null), "null_band": [lo, hi],
                    "outside_null": not lo <= mean <= hi, **det}
    return out


if __name__ == "__main__":
    config = json.loads((HERE / "config.json").read_text())
    with open(HERE / "expected.json", "w") as fh:
        json.dump(reference(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
