# Copyright (c) 2026, The MCLE Authors
# SPDX-License-Identifier: Apache-2.0
"""Freeze reference metric values for tests/data/golden_corpus.json.

Scores come from pycocoevalcap (the captioning-evaluation reference
implementation); run from the repository root:

    python3 tests/oracles/metrics_golden.py > tests/data/golden_metrics.json
"""

import json
import pathlib

from pycocoevalcap.bleu.bleu import Bleu
from pycocoevalcap.cider.cider import Cider
from pycocoevalcap.rouge.rouge import Rouge


def score(cands, refs):
    res = {i: [c] for i, c in enumerate(cands)}
    gts = {i: r for i, r in enumerate(refs)}
    bleu, _ = Bleu(4).compute_score(gts, res, verbose=0)
    rouge, rouge_each = Rouge().compute_score(gts, res)
    cider, cider_each = Cider().compute_score(gts, res)
    return {
        "bleu4": bleu[3],
        "rouge_l": float(rouge),
        "cider_d": float(cider),
        "rouge_l_per_sample": [float(x) for x in rouge_each],
        "cider_d_per_sample": [float(x) for x in cider_each],
    }


def main():
    root = pathlib.Path(__file__).resolve().parents[2]
    corpus = json.loads((root / "tests/data/golden_corpus.json").read_text())
    cands, refs, correct = corpus["candidates"], corpus["references"], corpus["correct"]
    out = {"all": score(cands, refs)}
    keep = [i for i, ok in enumerate(correct) if ok]
    out["correct_subset"] = score([cands[i] for i in keep], [refs[i] for i in keep])
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
