#!/usr/bin/env python3
"""Smoke test for the cws Python extension.

Builds nothing itself: it locates the compiled cdylib under target/ (debug
or release), exposes it as an importable module, and drives the main types
and operations end to end. Run `cargo build -p cws-python` first, then
`python3 python/smoke_test.py`.
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libcws.so", "libcws.dylib", "cws.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build -p cws-python")
    staging = pathlib.Path(tempfile.mkdtemp(prefix="cws-ext-"))
    target = staging / ("cws" + (".pyd" if built.suffix == ".dll" else ".so"))
    shutil.copy2(built, target)
    spec = importlib.util.spec_from_file_location("cws", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    cws = load_module()

    # Standalone operations.
    tokens = cws.tokenize("don't re-do it.")
    assert [t["surface"] for t in tokens] == ["don't", "re-do", "it"], tokens

    sentences = cws.split_sentences("Dr. Smith arrived. All good!", ["Dr"])
    assert sentences == ["Dr. Smith arrived.", "All good!"], sentences

    blob = cws.encode_envelope({"id": "e1", "text": "hi", "extra": [1, 2]})
    decoded = cws.decode_envelope(blob)
    assert decoded["attrs"]["extra"] == [1, 2]
    assert cws.encode_envelope(decoded) == blob, "canonical form is stable"

    encoded = cws.to_win1251("Привіт")
    assert cws.from_win1251(encoded) == "Привіт"
    assert cws.to_win1251("А") == b"\xc0"
    try:
        cws.to_win1251("中")
        raise AssertionError("strict mode must reject unmappable code points")
    except ValueError:
        pass
    assert cws.to_win1251("中", strict=False) == b"?"

    # A kernel configured from the shipped fixtures.
    kernel = cws.Kernel(str(ROOT / "fixtures" / "config.json"))
    presets = kernel.load_presets()
    assert presets == ["ontoprep", "clp", "summ", "keywords"], presets
    assert len(kernel.list_services()) == 10

    text = (
        "Cats purr when they rest. Cats sleep for most of the day. "
        "Dogs bark at the gate."
    )
    run = kernel.execute("clp", {"id": "doc-1", "text": text})
    lemmas = [t.get("lemma") for t in run["envelope"]["tokens"]]
    assert "cat" in lemmas and "the" not in lemmas, lemmas
    assert kernel.run_trace(run["run_id"])["composition"] == "clp"

    run = kernel.execute("summ", {"id": "doc-1", "text": text})
    assert run["envelope"]["summary"], run["envelope"]
    assert run["envelope"]["language"] == "en"

    # Indexing and search through the ontoprep pipeline.
    kernel.execute("ontoprep", {"id": "doc-1", "text": text})
    kernel.execute(
        "ontoprep",
        {"id": "doc-2", "text": "Machine learning models rank documents."},
    )
    hits = kernel.search("cats purr")
    assert hits and hits[0][0] == "doc-1", hits

    # Vector model queries.
    assert abs(kernel.similarity("cat", "cat") - 1.0) < 1e-9
    nearest = kernel.nearest("cat", k=2)
    assert nearest[0][0] == "kitten", nearest
    center, _ = kernel.cluster_center(["cat", "kitten", "dog"])
    assert center in {"cat", "kitten", "dog"}
    sim = kernel.set_similarity(["cat", "dog"], ["kitten"])
    assert -1.0 <= sim <= 1.0

    # Store and snapshot sync between two kernels.
    kernel.put_document("note-1", {"body": "hello"})
    bundle = kernel.sync_export()
    other = cws.Kernel()
    report = other.sync_import(bundle)
    assert report["applied"] == len(bundle["entries"])
    assert other.get_document("note-1")["body"] == {"body": "hello"}
    again = other.sync_import(bundle)
    assert again["applied"] == 0

    print("smoke test: OK")


if __name__ == "__main__":
    main()
