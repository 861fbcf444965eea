"""Smoke test for the pylshdedup extension.

Build first with `pip install --no-build-isolation -e crates/python`, then run
`python python/smoke_test.py`.
"""

import json
import random
import tempfile
from pathlib import Path

import pylshdedup as ld


def check_similarity():
    fam = ld.HashFamily(seed=1234, hashes=128)
    assert len(fam) == 128
    assert all(q < p for p, q in fam.params)

    rng = random.Random(3)
    words = ["".join(rng.choice("abcdefghij") for _ in range(6)) for _ in range(500)]
    a = " ".join(rng.choice(words) for _ in range(150))
    b = a[:400] + "XYZ" + a[403:]
    sig_a, sig_b = fam.signature(a), fam.signature(b)
    assert sig_a == fam.signature(a)
    est = ld.signature_similarity(sig_a, sig_b)
    exact = ld.exact_jaccard(a, b)
    assert abs(est - exact) < 0.15, (est, exact)
    print(f"similarity: estimate {est:.3f}, exact {exact:.3f}")


def check_components():
    groups = ld.connected_components([(5, 3), (3, 9), (20, 21), (7, 7)])
    assert groups == [[3, 5, 9], [20, 21]], groups


def check_pipeline(tmp):
    info = ld.gen_synthetic(tmp / "corpus", docs=2000, groups=200, seed=11, shards=4)
    assert info["documents"] == 2000 and len(info["paths"]) == 4

    cfg = ld.Config(info["paths"], str(tmp / "ws"), workers=2, threshold="0.8")
    assert cfg.threshold == "4/5" and cfg.hashes == 128

    out = ld.dedup(cfg)
    report = out["report"]
    assert report["total_docs"] == 2000
    assert len(report["groups"]) > 150, len(report["groups"])
    assert all(g["representative"] == min(g["members"]) for g in report["groups"])

    # Staged runs reproduce the end-to-end report.
    staged = ld.Config(info["paths"], str(tmp / "staged"), workers=1, memory_budget="64K")
    ld.hash(staged)
    compare = ld.gather_compare(staged)
    assert compare["passes"] > 1
    assert ld.union(staged) == report

    acc = ld.eval_accuracy(cfg)
    assert acc["dupset_jaccard"] >= 0.95, acc
    print(
        f"pipeline: {len(report['removal'])} to remove of {report['total_docs']}, "
        f"{compare['passes']} bounded passes, dupset jaccard {acc['dupset_jaccard']:.4f}"
    )


def check_errors(tmp):
    try:
        ld.Config([], hashes=100, bands=16, rows=8)
    except ValueError:
        pass
    else:
        raise AssertionError("H != b*r accepted")

    empty = ld.Config([str(tmp / "missing.jsonl")], str(tmp / "ws-missing"))
    try:
        ld.dedup(empty)
    except (OSError, ld.DedupError):
        pass
    else:
        raise AssertionError("missing input accepted")

    fresh = ld.Config([str(tmp / "corpus" / "corpus-00000.jsonl")], str(tmp / "ws-fresh"))
    try:
        ld.union(fresh)
    except ld.DedupError as e:
        assert e.exit_code == 4
    else:
        raise AssertionError("union ran without its prerequisites")


def main():
    check_similarity()
    check_components()
    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        check_pipeline(tmp)
        check_errors(tmp)
    print(json.dumps({"smoke_test": "ok"}))


if __name__ == "__main__":
    main()
