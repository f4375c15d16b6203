"""Smoke test for the vnprep_py extension module.

Build first:  maturin develop -m crates/python/Cargo.toml
"""

import os
import tempfile

import vnprep_py as vp

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    words = vp.segment("Tôi là một nghiên cứu viên".split(), ["nghiên cứu viên"])
    assert words == ["Tôi", "là", "một", "nghiên_cứu_viên"], words

    sents = vp.split_sentences("Tôi đi học. TS. Lan dạy toán!")
    assert len(sents) == 2, sents

    model = vp.BpeModel.train(["Tôi là sinh_viên", "nghiên_cứu là một", "Tôi nghiên_cứu"], vocab_size=80)
    pieces = model.encode(words)
    assert pieces[-1].endswith(vp.EOW)
    assert model.decode(pieces) == words

    kept, removed = vp.dedup(["a b c d e f", "a b c d e f", "g h i j k l"])
    assert kept == [0, 2] and removed[0][:2] == (1, 0), (kept, removed)
    assert vp.minhash_jaccard("a b c d e f g", "a b c d e f g", shingle_size=3) == 1.0

    blocks = vp.pack_blocks([[7] * 100] * 3, max_len=256)
    assert [len(b) for b in blocks] == [200, 100]
    ids, labels = vp.mask(list(range(4, 260)), seed=1, mask_id=3, vocab_size=1000, special_ids=[0, 1, 2, 3])
    assert len(ids) == len(labels) == 256
    assert any(l != vp.IGNORE_INDEX for l in labels)
    assert (ids, labels) == vp.mask(list(range(4, 260)), 1, 3, 1000, [0, 1, 2, 3])

    b = vp.training_budget(145_000_000, 24.4)
    assert (b["num_blocks"], b["total_steps"]) == (13_820_313, 539_856), b
    assert abs(vp.count_parameters("base") - 135e6) / 135e6 < 0.02
    assert abs(vp.count_parameters("large") - 370e6) / 370e6 < 0.02

    ni = float("-inf")
    assert vp.decode_mst([[ni, 5.0, 1.0], [ni, ni, 4.0], [ni, 2.0, ni]]) == [0, 1]
    assert vp.early_stopping([0.5, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]) == (7, 2)

    assert vp.pos_accuracy([["N", "V", "N", "CH"]], [["N", "V", "A", "CH"]]) == 75.0
    p, r, f = vp.ner_f1([["B-PER", "O", "O"]], [["B-PER", "O", "B-LOC"]])
    assert (p, r, round(f, 2)) == (50.0, 100.0, 66.67)
    gold = [([2, 0, 2, 3], ["sub", "root", "dob", "nmod"])]
    pred = [([2, 0, 2, 2], ["sub", "root", "nmod", "nmod"])]
    assert vp.las_uas(gold, pred) == (50.0, 75.0)
    assert vp.nli_accuracy(["entailment", "neutral"], ["entailment", "contradiction"]) == 50.0

    try:
        vp.nli_accuracy(["entailment"], ["maybe"])
    except ValueError:
        pass
    else:
        raise AssertionError("unknown label accepted")

    with tempfile.TemporaryDirectory() as out:
        digests = dict(vp.run_pipeline(os.path.join(ROOT, "data", "toy.conf"), out))
        with open(os.path.join(ROOT, "data", "toy.digests")) as fh:
            golden = {n: h for h, n in (line.split() for line in fh)}
        assert digests == golden, "pipeline digests differ from data/toy.digests"

    print("smoke test ok")


if __name__ == "__main__":
    main()
