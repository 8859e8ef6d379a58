"""Independent oracles shared by the test modules."""

import numpy as np

MASK = (1 << 64) - 1


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric):
    """``|a - n| / max(|a|, |n|)`` in the L2 norm; 0 when both vanish."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


class PyXoshiro:
    """Reference xoshiro256** in plain Python integers."""

    def __init__(self, seed, stream=0):
        x = (seed ^ (stream * 0xD1B54A32D192ED03)) & MASK
        self.s = []
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & MASK
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
            self.s.append(z ^ (z >> 31))

    @staticmethod
    def _rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & MASK

    def next(self):
        s = self.s
        result = (self._rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return result

    def double(self):
        return (self.next() >> 11) * 2.0**-53

    def bounded(self, bound):
        threshold = (-bound) % bound
        r = self.next()
        while r < threshold:
            r = self.next()
        return r % bound

    def permutation(self, n):
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.bounded(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def naive_confusion(pred, lab):
    tp = tn = fp = fn = 0
    for p, y in zip(pred, lab):
        if p == 1 and y == 1:
            tp += 1
        elif p == 0 and y == 0:
            tn += 1
        elif p == 1:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def naive_metrics(tp, tn, fp, fn):
    """Accuracy, precision, recall, F1 straight from their definitions (0 on empty denominators)."""
    acc = (tp + tn) / (tp + tn + fp + fn)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return acc, prec, rec, f1


def grid_best_f1(scores, labels, points=10_001):
    """Best F1 over evenly spaced thresholds in [0, 1], verdict ``score > tau``."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    taus = np.linspace(0.0, 1.0, points)
    pred = scores[None, :] > taus[:, None]
    tp = (pred & labels).sum(axis=1)
    fp = (pred & ~labels).sum(axis=1)
    fn = (~pred & labels).sum(axis=1)
    best = 0.0
    for a, b, c in zip(tp.tolist(), fp.tolist(), fn.tolist()):
        best = max(best, naive_metrics(a, 0, b, c)[3])
    return best
