"""Character and word error rates from unit-cost Levenshtein alignments.

Directional naming follows ASR convention: an insertion is an extra element
in the prediction, a deletion is a reference element the prediction misses.
Rates are edits over reference length and may exceed 1; nothing is clamped.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return self.distance / self.reference_length


def levenshtein(pred, gt) -> EditCounts:
    """Unit-cost DP plus backtracking of one optimal path.

    Ties between moves of equal cost resolve substitution, then deletion,
    then insertion, so the reported split is deterministic.
    """
    n, m = len(pred), len(gt)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        pi = pred[i - 1]
        row, prow = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prow[j - 1] + (pi != gt[j - 1]),
                         prow[j] + 1,
                         row[j - 1] + 1)

    sub = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (pred[i - 1] != gt[j - 1]):
            sub += pred[i - 1] != gt[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and d[i][j] == d[i][j - 1] + 1:
            dele += 1
            j -= 1
        else:
            ins += 1
            i -= 1
    return EditCounts(int(sub), ins, dele, m)


def cer(pred: str, gt: str) -> float:
    """Character error rate over Unicode scalar values of gt."""
    if not gt:
        raise ValueError("cer requires a non-empty reference string")
    return levenshtein(pred, gt).rate


def wer(pred: str, gt: str) -> float:
    """Word error rate; words are maximal runs of non-whitespace."""
    gt_words = gt.split()
    if not gt_words:
        raise ValueError("wer requires a reference with at least one word")
    return levenshtein(pred.split(), gt_words).rate


def corpus_rates(pairs) -> tuple[float, float]:
    """Micro-averaged (CER, WER): edit sums over reference-length sums."""
    ce = cw = 0
    nc = nw = 0
    for pred, gt in pairs:
        if not gt:
            raise ValueError("corpus_rates requires non-empty references")
        gt_words = gt.split()
        if not gt_words:
            raise ValueError("corpus_rates requires references with at least one word")
        c = levenshtein(pred, gt)
        w = levenshtein(pred.split(), gt_words)
        ce += c.distance
        nc += c.reference_length
        cw += w.distance
        nw += w.reference_length
    return ce / nc, cw / nw
