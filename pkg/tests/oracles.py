"""Independent reference implementations used as test oracles.

They work on plain ``(x1, y1, x2, y2)`` tuples and share no code with the
library beyond the input data.
"""

import math


def iou_xyxy(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def nmm_literal(boxes, tau=0.2, gamma=1.5, h_min=80.0):
    """Straight-line transcription of the modified Non-Max-Merge.

    ``boxes`` are ``(x1, y1, x2, y2)``. Returns ``[(member_indices, region_xyxy)]``.
    Visited boxes are not offered to later seeds (the prose: selected boxes
    "no longer participate").
    """
    n = len(boxes)
    area = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes]
    B = sorted(range(n), key=lambda k: (area[k], k))
    visited = {}
    C = []
    for i in range(n):
        if visited.get(B[i]):
            continue
        visited[B[i]] = True
        bi = boxes[B[i]]
        Ck = list(bi)
        members = [B[i]]
        h_i = bi[3] - bi[1]
        h_r = w_r = gamma * h_i
        for j in range(i + 1, n):
            if visited.get(B[j]):
                continue
            bj = boxes[B[j]]
            if iou_xyxy(bj, bi) > tau:
                cand = [min(Ck[0], bj[0]), min(Ck[1], bj[1]), max(Ck[2], bj[2]), max(Ck[3], bj[3])]
                h_c, w_c = cand[3] - cand[1], cand[2] - cand[0]
                if h_c > h_min or w_c > h_min:
                    if h_c > h_r or w_c > h_r:
                        continue
                visited[B[j]] = True
                Ck = cand
                members.append(B[j])
        C.append((members, tuple(Ck)))
    return C


def naive_focal(pred, target, m, a=2.0, b=4.0):
    """Pixel-by-pixel loop over the loss, no vectorisation. ``pred`` is clamped to [1e-6, 1 - 1e-6]."""
    total = 0.0
    h, w = target.shape
    for y in range(h):
        for x in range(w):
            p = min(max(float(pred[y, x]), 1e-6), 1 - 1e-6)
            t = float(target[y, x])
            if t == 1.0:
                total -= (1 - p) ** a * math.log(p)
            else:
                total -= (1 - t) ** b * p**a * math.log(1 - p)
    return total / m


def nms_reference(items, thr):
    """O(n^2) greedy NMS over ``(xyxy, score, category)``; returns kept indices."""
    order = sorted(range(len(items)), key=lambda k: (-items[k][1], k))
    suppressed = set()
    keep = []
    for a in order:
        if a in suppressed:
            continue
        keep.append(a)
        for b in order:
            if b == a or b in suppressed or b in keep:
                continue
            if items[b][2] == items[a][2] and iou_xyxy(items[a][0], items[b][0]) > thr:
                suppressed.add(b)
    return keep


def bilinear_pixel(img, x, y):
    """Bilinear sample at continuous coordinate with pixel centers at +0.5, edges clamped."""
    H, W = len(img), len(img[0])
    fx, fy = x - 0.5, y - 0.5
    x0, y0 = math.floor(fx), math.floor(fy)
    ax, ay = fx - x0, fy - y0

    def at(yy, xx):
        return img[min(max(yy, 0), H - 1)][min(max(xx, 0), W - 1)]

    return (
        at(y0, x0) * (1 - ax) * (1 - ay)
        + at(y0, x0 + 1) * ax * (1 - ay)
        + at(y0 + 1, x0) * (1 - ax) * ay
        + at(y0 + 1, x0 + 1) * ax * ay
    )


def pr_sweep_ap(scored, n_gt):
    """101-point AP from an explicit threshold sweep over ``[(score, is_tp)]``.

    Every distinct score is used as a cut; precision at recall r is the best
    precision over cuts reaching recall >= r.
    """
    if n_gt == 0:
        return 0.0
    cuts = sorted({s for s, _ in scored}, reverse=True)
    points = []
    for c in cuts:
        kept = [t for s, t in scored if s >= c]
        tp = sum(kept)
        points.append((tp / n_gt, tp / len(kept)))
    total = 0.0
    for k in range(101):
        r = k / 100
        ps = [p for rc, p in points if rc >= r - 1e-12]
        total += max(ps) if ps else 0.0
    return total / 101
