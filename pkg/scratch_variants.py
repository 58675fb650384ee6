"""Scratch: probe benchmark variants for the mode ordering. Not shipped."""
import sys
import time
import numpy as np

import purls.synth as S
from purls.bundle import Bundle, BundleDims, ClassEntry, SkeletonFeatures, SplitSpec, StaticPartitionMap, even_intervals
from purls import TrainConfig, train, evaluate


def counts(a, C):
    return tuple(np.bincount(a, minlength=C))


def draw_plain_chain(rng, spec):
    """Distinct counts; unseen form a Hamming-1 chain (pairwise-close mixtures)."""
    slots = spec.parts + spec.intervals
    while True:
        chosen, cset = [], set()
        while len(chosen) < spec.seen_classes:
            cand = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
            k = counts(cand, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if {c for a in chosen for c in a} != set(range(spec.concepts)):
            continue
        # unseen chain
        u = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
        tries = 0
        while counts(u, spec.concepts) in cset and tries < 100:
            u = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots)); tries += 1
        un = [u]; cset.add(counts(u, spec.concepts))
        while len(un) < spec.unseen_classes:
            base = un[-1]
            for _ in range(200):
                pos = rng.integers(0, slots)
                new = list(base); new[pos] = int(rng.integers(0, spec.concepts))
                new = tuple(new)
                k = counts(new, spec.concepts)
                if k not in cset:
                    cset.add(k); un.append(new); break
            else:
                break
        if len(un) == spec.unseen_classes:
            return chosen + un


def draw_anchored(rng, spec):
    """Seen classes share a fixed base; only 2 slot positions vary (over all
    concepts). Unseen recombine by changing base positions too."""
    slots = spec.parts + spec.intervals
    while True:
        base = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
        free = sorted(rng.choice(slots, size=2, replace=False))
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < spec.seen_classes and tries < 2000:
            tries += 1
            new = list(base)
            for f in free:
                new[f] = int(rng.integers(0, spec.concepts))
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(new)
        if len(chosen) < spec.seen_classes:
            continue
        if {c for a in chosen for c in a} != set(range(spec.concepts)):
            continue
        fixed = [p for p in range(slots) if p not in free]
        un, tries = [], 0
        while len(un) < spec.unseen_classes and tries < 2000:
            tries += 1
            new = list(base)
            # change one fixed slot + randomize free slots
            pos = fixed[int(rng.integers(0, len(fixed)))]
            new[pos] = int(rng.integers(0, spec.concepts))
            for f in free:
                new[f] = int(rng.integers(0, spec.concepts))
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k in cset:
                continue
            cset.add(k); un.append(new)
        if len(un) == spec.unseen_classes:
            return chosen + un


def gen_with(assignments, spec):
    rng = np.random.default_rng(spec.seed + 777)
    text = S._concept_vectors(rng, spec.concepts, spec.text_dim, 0.5)
    vis = S._concept_vectors(rng, spec.concepts, spec.visual_dim, 0.5)
    part_labels = [f"part_{p}" for p in range(spec.parts)]
    blocks = np.array_split(np.arange(spec.joints), spec.parts)
    smap = StaticPartitionMap(
        parts=tuple((part_labels[p], tuple(int(j) for j in blocks[p])) for p in range(spec.parts)),
        intervals=even_intervals(spec.temporal_steps, spec.intervals))
    pj = np.empty(spec.joints, int)
    for p, b in enumerate(blocks):
        pj[b] = p
    iz = np.empty(spec.temporal_steps, int)
    for z, (a, b) in enumerate(smap.intervals):
        iz[a:b] = z
    dims = BundleDims(spec.temporal_steps, spec.joints, spec.visual_dim, spec.text_dim, spec.parts, spec.intervals)
    classes, samples = {}, []
    for cid, slots_ in enumerate(assignments):
        ps, its = slots_[:spec.parts], slots_[spec.parts:]
        bank = np.empty((dims.scales, spec.text_dim))
        for i, c in enumerate(slots_):
            bank[i] = text[c] + spec.noise * rng.normal(size=spec.text_dim)
        tot = text[list(slots_)].sum(axis=0)
        bank[-1] = tot / np.linalg.norm(tot)
        classes[cid] = ClassEntry(cid, f"class_{cid:03d}", bank.astype(np.float32))
        cn = np.empty((spec.temporal_steps, spec.joints), int)
        for t in range(spec.temporal_steps):
            for j in range(spec.joints):
                cn[t, j] = ps[pj[j]] if (t + j) % 2 == 0 else its[iz[t]]
        base = vis[cn]
        for k in range(spec.samples_per_class):
            samples.append(SkeletonFeatures((base + spec.noise * rng.normal(size=base.shape)).astype(np.float32), cid, f"{cid:03d}_{k:03d}"))
    b = Bundle(dims, part_labels, [f"interval_{z}" for z in range(spec.intervals)], classes, samples, smap)
    b.validate()
    return b, SplitSpec(tuple(range(spec.seen_classes)), tuple(range(spec.seen_classes, spec.seen_classes + spec.unseen_classes)))


def run(variant, draw, seeds, lr=3e-3, hidden=64):
    out = {m: [] for m in ("global", "static", "adaptive")}
    t0 = time.time()
    for seed in seeds:
        spec = S.SynthSpec(seed=seed)
        rng = np.random.default_rng(seed)
        asg = draw(rng, spec)
        bundle, split = gen_with(asg, spec)
        row = []
        for mode in out:
            cfg = TrainConfig(mode=mode, alpha_mode="learnable", learning_rate=lr, batch_size=64,
                              max_epochs=150, patience=30, seed=seed, hidden_dim=hidden, attention_dim=32)
            ck = train(bundle, split, cfg)
            rep = evaluate(bundle, split, ck.model)
            out[mode].append(rep.top1)
            row.append(f"{mode[:2]}={ck.best_metric:.2f}/{rep.top1:.2f}")
        print(f"  seed {seed}: {' '.join(row)}")
    means = {m: float(np.mean(v)) for m, v in out.items()}
    print(f"{variant}: means {means}  ({time.time()-t0:.0f}s)")
    return means


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "both"
    seeds = [0, 1, 2]
    if which in ("chain", "both"):
        run("chain", draw_plain_chain, seeds)
    if which in ("anchored", "both"):
        run("anchored", draw_anchored, seeds)


def draw_peaky(rng, spec, peak=5, seen_max=2):
    """Seen classes are spread compositions (max count <= seen_max);
    unseen classes are peaky: one dominant concept on `peak` slots,
    dominant concepts pairwise distinct across unseen."""
    slots = spec.parts + spec.intervals
    while True:
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < spec.seen_classes and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
            k = counts(cand, spec.concepts)
            if max(k) > seen_max or k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < spec.seen_classes:
            continue
        if {c for a in chosen for c in a} != set(range(spec.concepts)):
            continue
        doms = rng.permutation(spec.concepts)[:spec.unseen_classes]
        un = []
        ok = True
        for d in doms:
            for _ in range(200):
                new = [int(d)] * slots
                others = rng.integers(0, spec.concepts, size=slots - peak)
                pos = rng.permutation(slots)[:slots - peak]
                for p, c in zip(pos, others):
                    new[p] = int(c)
                new = tuple(new)
                k = counts(new, spec.concepts)
                if k[d] >= peak - 1 and k not in cset:
                    cset.add(k); un.append(new); break
            else:
                ok = False
                break
        if ok and len(un) == spec.unseen_classes:
            return chosen + un


def draw_shifted(rng, spec, peak=4, seen_max=2):
    """Seen: spread compositions. Unseen: all share one dominant concept on
    `peak` slots and differ only in the minor slots."""
    slots = spec.parts + spec.intervals
    while True:
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < spec.seen_classes and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
            k = counts(cand, spec.concepts)
            if max(k) > seen_max or k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < spec.seen_classes:
            continue
        if {c for a in chosen for c in a} != set(range(spec.concepts)):
            continue
        d = int(rng.integers(0, spec.concepts))
        un, tries = [], 0
        while len(un) < spec.unseen_classes and tries < 2000:
            tries += 1
            new = [d] * slots
            pos = rng.permutation(slots)[:slots - peak]
            for p in pos:
                new[p] = int(rng.integers(0, spec.concepts))
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k[d] < peak or k in cset:
                continue
            cset.add(k); un.append(new)
        if len(un) == spec.unseen_classes:
            return chosen + un


def draw_s1(rng, spec):
    """Plain: distinct concept-count vectors, seen covers all concepts."""
    slots = spec.parts + spec.intervals
    total = spec.seen_classes + spec.unseen_classes
    while True:
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < total and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, spec.concepts, size=slots))
            k = counts(cand, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < total:
            continue
        if {c for a in chosen[:spec.seen_classes] for c in a} == set(range(spec.concepts)):
            return chosen


def draw_rare(rng, spec, rare_budget=1, unseen_rare_min=3):
    """Concepts C-2, C-1 are rare in seen classes (at most rare_budget total
    occurrences each, >=1 for coverage); unseen classes use them heavily."""
    slots = spec.parts + spec.intervals
    a, b = spec.concepts - 2, spec.concepts - 1
    common = spec.concepts - 2
    while True:
        chosen, cset = [], set()
        tries = 0
        # seen: draw from common concepts only, then inject one 'a' and one 'b'
        while len(chosen) < spec.seen_classes and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, common, size=slots))
            k = counts(cand, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < spec.seen_classes:
            continue
        # inject rare concepts into two distinct seen classes (one slot each)
        inject = rng.permutation(spec.seen_classes)[:2]
        ok = True
        for cls_idx, rare_c in zip(inject, (a, b)):
            old = chosen[cls_idx]
            cset.discard(counts(old, spec.concepts))
            slot = int(rng.integers(0, slots))
            new = list(old); new[slot] = rare_c
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k in cset:
                ok = False
                break
            cset.add(k); chosen[cls_idx] = new
        if not ok:
            continue
        if {c for asg in chosen for c in asg} != set(range(spec.concepts)):
            continue
        # unseen: heavy users of the rare concepts
        un, tries = [], 0
        while len(un) < spec.unseen_classes and tries < 3000:
            tries += 1
            cand = [int(c) for c in rng.integers(0, spec.concepts, size=slots)]
            n_rare = int(rng.integers(unseen_rare_min, slots - 1))
            pos = rng.permutation(slots)[:n_rare]
            for p in pos:
                cand[p] = a if rng.integers(2) else b
            cand = tuple(cand)
            k = counts(cand, spec.concepts)
            if k[a] + k[b] < unseen_rare_min or k in cset:
                continue
            cset.add(k); un.append(cand)
        if len(un) == spec.unseen_classes:
            return chosen + un


def draw_rare2(rng, spec, unseen_rare_min=3, inject_classes=2):
    """Like draw_rare but each rare concept is injected into `inject_classes`
    seen classes (one slot each)."""
    slots = spec.parts + spec.intervals
    a, b = spec.concepts - 2, spec.concepts - 1
    common = spec.concepts - 2
    while True:
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < spec.seen_classes and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, common, size=slots))
            k = counts(cand, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < spec.seen_classes:
            continue
        order = rng.permutation(spec.seen_classes)
        ok = True
        for i, (cls_idx, rare_c) in enumerate(zip(order[:2 * inject_classes],
                                                  [a] * inject_classes + [b] * inject_classes)):
            old = chosen[cls_idx]
            cset.discard(counts(old, spec.concepts))
            slot = int(rng.integers(0, slots))
            new = list(old); new[slot] = rare_c
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k in cset:
                ok = False
                break
            cset.add(k); chosen[cls_idx] = new
        if not ok:
            continue
        if {c for asg in chosen for c in asg} != set(range(spec.concepts)):
            continue
        un, tries = [], 0
        while len(un) < spec.unseen_classes and tries < 3000:
            tries += 1
            cand = [int(c) for c in rng.integers(0, spec.concepts, size=slots)]
            n_rare = int(rng.integers(unseen_rare_min, slots - 1))
            pos = rng.permutation(slots)[:n_rare]
            for p in pos:
                cand[p] = a if rng.integers(2) else b
            cand = tuple(cand)
            k = counts(cand, spec.concepts)
            if k[a] + k[b] < unseen_rare_min or k in cset:
                continue
            cset.add(k); un.append(cand)
        if len(un) == spec.unseen_classes:
            return chosen + un


def draw_rare3(rng, spec, unseen_rare_min=3, min_l1=4):
    """draw_rare with a pairwise separation constraint between unseen count
    vectors so the unseen set is rankable once rare concepts are known."""
    slots = spec.parts + spec.intervals
    a, b = spec.concepts - 2, spec.concepts - 1
    common = spec.concepts - 2
    while True:
        chosen, cset = [], set()
        tries = 0
        while len(chosen) < spec.seen_classes and tries < 5000:
            tries += 1
            cand = tuple(int(c) for c in rng.integers(0, common, size=slots))
            k = counts(cand, spec.concepts)
            if k in cset:
                continue
            cset.add(k); chosen.append(cand)
        if len(chosen) < spec.seen_classes:
            continue
        inject = rng.permutation(spec.seen_classes)[:2]
        ok = True
        for cls_idx, rare_c in zip(inject, (a, b)):
            old = chosen[cls_idx]
            cset.discard(counts(old, spec.concepts))
            slot = int(rng.integers(0, slots))
            new = list(old); new[slot] = rare_c
            new = tuple(new)
            k = counts(new, spec.concepts)
            if k in cset:
                ok = False
                break
            cset.add(k); chosen[cls_idx] = new
        if not ok:
            continue
        if {c for asg in chosen for c in asg} != set(range(spec.concepts)):
            continue
        un_counts, un, tries = [], [], 0
        while len(un) < spec.unseen_classes and tries < 5000:
            tries += 1
            cand = [int(c) for c in rng.integers(0, spec.concepts, size=slots)]
            n_rare = int(rng.integers(unseen_rare_min, slots - 1))
            pos = rng.permutation(slots)[:n_rare]
            for p in pos:
                cand[p] = a if rng.integers(2) else b
            cand = tuple(cand)
            k = counts(cand, spec.concepts)
            if k[a] + k[b] < unseen_rare_min or k in cset:
                continue
            if any(sum(abs(np.array(k) - np.array(kk))) < min_l1 for kk in un_counts):
                continue
            cset.add(k); un_counts.append(k); un.append(cand)
        if len(un) == spec.unseen_classes:
            return chosen + un
