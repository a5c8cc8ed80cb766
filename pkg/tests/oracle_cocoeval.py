"""Reference evaluator used as an independent oracle in tests.

This is a deliberately literal transliteration of the canonical COCO
detection evaluator's greedy matching and 101-point accumulation,
working on plain COCO-style dicts. It keeps the reference quirks the
production evaluator documents (epsilon in the precision denominator,
try/except fill of the sampled precision), so agreement between the two
routes is evidence, not tautology. Do not "clean this up" to look like
the production code.
"""

from __future__ import annotations

import numpy as np

IOU_THRS = np.linspace(0.5, 0.95, int(np.round((0.95 - 0.5) / 0.05)) + 1)
REC_THRS = np.linspace(0.0, 1.00, int(np.round((1.00 - 0.0) / 0.01)) + 1)
MAX_DETS = [1, 10, 100]
AREA_RNG = [
    [0.0, 1e5**2],
    [0.0, 32.0**2],
    [32.0**2, 96.0**2],
    [96.0**2, 1e5**2],
]
AREA_LBL = ["all", "small", "medium", "large"]


def bbox_iou(dts, gts, iscrowd):
    """Pairwise IoU on [x, y, w, h] boxes; crowd gt divides by det area."""
    ious = np.zeros((len(dts), len(gts)))
    for j, g in enumerate(gts):
        gx, gy, gw, gh = g
        garea = gw * gh
        for i, d in enumerate(dts):
            dx, dy, dw, dh = d
            darea = dw * dh
            iw = min(dx + dw, gx + gw) - max(dx, gx)
            ih = min(dy + dh, gy + gh) - max(dy, gy)
            if iw <= 0 or ih <= 0:
                continue
            inter = iw * ih
            union = darea if iscrowd[j] else darea + garea - inter
            ious[i, j] = inter / union
    return ious


class OracleEval:
    """COCO-style evaluation over plain dict annotations.

    gts: {id, image_id, category_id, bbox, area, iscrowd}
    dts: {id, image_id, category_id, bbox, score}
    """

    def __init__(self, gts, dts, img_ids, cat_ids):
        self.img_ids = sorted(set(img_ids))
        self.cat_ids = sorted(set(cat_ids))
        self._gts = {(i, c): [] for i in self.img_ids for c in self.cat_ids}
        self._dts = {(i, c): [] for i in self.img_ids for c in self.cat_ids}
        for gt in gts:
            gt = dict(gt)
            gt["ignore"] = 1 if gt.get("iscrowd") else 0
            self._gts[gt["image_id"], gt["category_id"]].append(gt)
        for dt in dts:
            dt = dict(dt)
            bb = dt["bbox"]
            dt["area"] = bb[2] * bb[3]
            self._dts[dt["image_id"], dt["category_id"]].append(dt)
        self.ious = {}
        self.eval_imgs = []
        self.precision = None
        self.recall = None

    def compute_iou(self, img_id, cat_id):
        gt = self._gts[img_id, cat_id]
        dt = self._dts[img_id, cat_id]
        if len(gt) == 0 and len(dt) == 0:
            return []
        inds = np.argsort([-d["score"] for d in dt], kind="mergesort")
        dt = [dt[i] for i in inds]
        if len(dt) > MAX_DETS[-1]:
            dt = dt[0 : MAX_DETS[-1]]
        g = [g["bbox"] for g in gt]
        d = [d["bbox"] for d in dt]
        iscrowd = [int(o.get("iscrowd", 0)) for o in gt]
        return bbox_iou(d, g, iscrowd)

    def evaluate_img(self, img_id, cat_id, a_rng, max_det):
        gt = self._gts[img_id, cat_id]
        dt = self._dts[img_id, cat_id]
        if len(gt) == 0 and len(dt) == 0:
            return None
        for g in gt:
            if g["ignore"] or (g["area"] < a_rng[0] or g["area"] > a_rng[1]):
                g["_ignore"] = 1
            else:
                g["_ignore"] = 0
        gtind = np.argsort([g["_ignore"] for g in gt], kind="mergesort")
        gt = [gt[i] for i in gtind]
        dtind = np.argsort([-d["score"] for d in dt], kind="mergesort")
        dt = [dt[i] for i in dtind[0:max_det]]
        iscrowd = [int(o.get("iscrowd", 0)) for o in gt]
        ious = (
            self.ious[img_id, cat_id][:, gtind]
            if len(self.ious[img_id, cat_id]) > 0
            else self.ious[img_id, cat_id]
        )
        T = len(IOU_THRS)
        G = len(gt)
        D = len(dt)
        gtm = np.zeros((T, G))
        dtm = np.zeros((T, D))
        gt_ig = np.array([g["_ignore"] for g in gt])
        dt_ig = np.zeros((T, D))
        if not len(ious) == 0:
            for tind, t in enumerate(IOU_THRS):
                for dind, d in enumerate(dt):
                    iou = min([t, 1 - 1e-10])
                    m = -1
                    for gind, g in enumerate(gt):
                        if gtm[tind, gind] > 0 and not iscrowd[gind]:
                            continue
                        if m > -1 and gt_ig[m] == 0 and gt_ig[gind] == 1:
                            break
                        if ious[dind, gind] < iou:
                            continue
                        iou = ious[dind, gind]
                        m = gind
                    if m == -1:
                        continue
                    dt_ig[tind, dind] = gt_ig[m]
                    dtm[tind, dind] = gt[m]["id"]
                    gtm[tind, m] = d["id"]
        a = np.array(
            [d["area"] < a_rng[0] or d["area"] > a_rng[1] for d in dt]
        ).reshape((1, len(dt)))
        dt_ig = np.logical_or(dt_ig, np.logical_and(dtm == 0, np.repeat(a, T, 0)))
        return {
            "dtMatches": dtm,
            "gtMatches": gtm,
            "dtScores": [d["score"] for d in dt],
            "gtIgnore": gt_ig,
            "dtIgnore": dt_ig,
        }

    def evaluate(self):
        for cat_id in self.cat_ids:
            for img_id in self.img_ids:
                self.ious[img_id, cat_id] = self.compute_iou(img_id, cat_id)
        max_det = MAX_DETS[-1]
        self.eval_imgs = [
            self.evaluate_img(img_id, cat_id, a_rng, max_det)
            for cat_id in self.cat_ids
            for a_rng in AREA_RNG
            for img_id in self.img_ids
        ]

    def accumulate(self):
        T = len(IOU_THRS)
        R = len(REC_THRS)
        K = len(self.cat_ids)
        A = len(AREA_RNG)
        M = len(MAX_DETS)
        precision = -np.ones((T, R, K, A, M))
        recall = -np.ones((T, K, A, M))
        I = len(self.img_ids)
        for k in range(K):
            for a in range(A):
                for m, max_det in enumerate(MAX_DETS):
                    E = [self.eval_imgs[k * A * I + a * I + i] for i in range(I)]
                    E = [e for e in E if e is not None]
                    if len(E) == 0:
                        continue
                    dt_scores = np.concatenate(
                        [np.asarray(e["dtScores"][0:max_det]) for e in E]
                    )
                    inds = np.argsort(-dt_scores, kind="mergesort")
                    dtm = np.concatenate(
                        [e["dtMatches"][:, 0:max_det] for e in E], axis=1
                    )[:, inds]
                    dt_ig = np.concatenate(
                        [e["dtIgnore"][:, 0:max_det] for e in E], axis=1
                    )[:, inds]
                    gt_ig = np.concatenate([e["gtIgnore"] for e in E])
                    npig = np.count_nonzero(gt_ig == 0)
                    if npig == 0:
                        continue
                    tps = np.logical_and(dtm, np.logical_not(dt_ig))
                    fps = np.logical_and(np.logical_not(dtm), np.logical_not(dt_ig))
                    tp_sum = np.cumsum(tps, axis=1).astype(dtype=np.float64)
                    fp_sum = np.cumsum(fps, axis=1).astype(dtype=np.float64)
                    for t, (tp, fp) in enumerate(zip(tp_sum, fp_sum)):
                        tp = np.array(tp)
                        fp = np.array(fp)
                        nd = len(tp)
                        rc = tp / npig
                        pr = tp / (fp + tp + np.spacing(1))
                        q = np.zeros((R,))
                        if nd:
                            recall[t, k, a, m] = rc[-1]
                        else:
                            recall[t, k, a, m] = 0
                        pr = pr.tolist()
                        q = q.tolist()
                        for i in range(nd - 1, 0, -1):
                            if pr[i] > pr[i - 1]:
                                pr[i - 1] = pr[i]
                        inds = np.searchsorted(rc, REC_THRS, side="left")
                        try:
                            for ri, pi in enumerate(inds):
                                q[ri] = pr[pi]
                        except IndexError:
                            pass
                        precision[t, :, k, a, m] = np.array(q)
        self.precision = precision
        self.recall = recall

    def _summarize(self, ap, iou_thr=None, area="all", max_dets=100):
        aind = [i for i, lbl in enumerate(AREA_LBL) if lbl == area]
        mind = [i for i, m in enumerate(MAX_DETS) if m == max_dets]
        if ap:
            s = self.precision
            if iou_thr is not None:
                t = np.where(np.isclose(iou_thr, IOU_THRS))[0]
                s = s[t]
            s = s[:, :, :, aind, mind]
        else:
            s = self.recall
            if iou_thr is not None:
                t = np.where(np.isclose(iou_thr, IOU_THRS))[0]
                s = s[t]
            s = s[:, :, aind, mind]
        if len(s[s > -1]) == 0:
            return -1.0
        return float(np.mean(s[s > -1]))

    def per_class_ap(self):
        out = {}
        for k, cat_id in enumerate(self.cat_ids):
            s = self.precision[:, :, k, 0, 2]
            out[cat_id] = float(np.mean(s[s > -1])) if len(s[s > -1]) else -1.0
        return out

    def summarize(self):
        return {
            "mAP": self._summarize(1),
            "AP50": self._summarize(1, iou_thr=0.5),
            "APs": self._summarize(1, area="small"),
            "AR@1": self._summarize(0, max_dets=1),
            "AR@10": self._summarize(0, max_dets=10),
            "AR@100": self._summarize(0, max_dets=100),
            "per_class": self.per_class_ap(),
        }


def oracle_metrics(gts, dts, img_ids, cat_ids):
    ev = OracleEval(gts, dts, img_ids, cat_ids)
    ev.evaluate()
    ev.accumulate()
    return ev.summarize()
