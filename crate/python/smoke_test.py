"""Smoke test for the `granule` extension module.

Builds the cdylib with cargo (release), loads it from a temporary directory
and exercises each exposed operation.  Run: python3 python/smoke_test.py
"""

import importlib.util
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module(tmp: Path):
    subprocess.run(["cargo", "build", "--release", "-p", "granule-py"], cwd=ROOT, check=True)
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target"))
    lib = target / "release" / "libgranule.so"
    dest = tmp / "granule.so"
    shutil.copy(lib, dest)
    found = importlib.util.spec_from_file_location("granule", dest)
    module = importlib.util.module_from_spec(found)
    found.loader.exec_module(module)
    return module


def check(name, cond):
    print(("PASS " if cond else "FAIL ") + name)
    if not cond:
        sys.exit(1)


def main():
    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        g = load_module(tmp)

        text = "Apple Inc. is an American multinational technology company ."
        tokens = g.tokenize(text)
        check("tokenize", tokens[:3] == ["Apple", "Inc", "."])

        n = len(tokens)
        ps, pe = [0.0] * n, [0.0] * n
        ps[tokens.index("American")] = 0.45
        ps[tokens.index("multinational")] = 0.42
        ps[tokens.index("technology")] = 0.40
        pe[tokens.index("company")] = 0.50
        spans = g.decode(text, ps, pe, threshold=0.85)
        check(
            "decode nested spans",
            [s["surface"] for s in spans]
            == ["American multinational technology company", "multinational technology company", "technology company"],
        )
        check("decode empty above 2", g.decode(text, ps, pe, threshold=2.0) == [])

        kept, decisions = g.prune([("the company", 0.9), ("company", 0.6)])
        check("prune strip", kept == [("company", 0.9)] and decisions[0]["action"] == "rewritten")
        kept, _ = g.prune([("one", 0.9), ("two", 0.6)], exclusive_groups=[["one", "two"]])
        check("prune exclusive", kept == [("one", 0.9)])

        name = "Franklin Delano Roosevelt"
        sentence = name + " was an American politician who served as the 32nd president."
        check("hearst", g.hearst(name, sentence) == ["American politician"])
        check("relative_f1", abs(g.relative_f1(0.6, 0.5) - 6 / 11) < 1e-12)
        check("softmax", abs(g.two_way_softmax(0.0, 0.0) - 0.5) < 1e-12)

        cfg = tmp / "synthetic" / "pipeline.toml"
        audit = g.gen_synthetic(str(cfg), entities=100, seed=7)
        check("synthetic audit", audit["nested_fraction"] > 0.3)

        p = g.Pipeline(str(cfg))
        summary = p.run_all()
        granule_report = next(r for r in summary["reports"] if r["system_id"] == "granule")
        check("run_all precision", granule_report["precision"] >= 0.9)

        try:
            g.Pipeline(str(cfg), seed=99).train_head()
            check("seed conflict raises", False)
        except g.SeedConflictError:
            check("seed conflict raises", True)
        try:
            g.Pipeline(str(tmp / "absent.toml"))
            check("missing config raises", False)
        except g.MissingInputError:
            check("missing config raises", True)

        store = p.annotation_store(sample_size=20)
        task = store.list(status="pending", limit=1)[0]
        store.submit(task["task_id"], "correct", annotator="smoke")
        check("annotation progress", store.progress()["labeled"] == 1)
        check("annotation export", store.export("selector")["rows"] == 1)
        try:
            store.submit(task["task_id"], "maybe")
            check("bad verdict raises", False)
        except g.ConfigError:
            check("bad verdict raises", True)
        reopened = p.annotation_store(sample_size=20)
        check("annotation replay", reopened.get(task["task_id"])["verdict"] == "correct")


if __name__ == "__main__":
    main()
