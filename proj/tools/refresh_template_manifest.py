#!/usr/bin/env python3
"""Rebuild assets/templates/manifest.json after editing template files.

Existing entries keep their version and verbatim flag; a changed checksum
bumps the entry version. New files get version "1" and verbatim=false.
"""
import argparse
import hashlib
import json
import pathlib


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("template_dir", nargs="?",
                        default=pathlib.Path(__file__).resolve().parent.parent / "assets" / "templates")
    args = parser.parse_args()
    root = pathlib.Path(args.template_dir)
    manifest_path = root / "manifest.json"
    old = {}
    version = "1.0.0"
    if manifest_path.exists():
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        version = data.get("version", version)
        old = {e["path"]: e for e in data.get("templates", [])}

    entries = []
    for path in sorted(root.glob("*/*/*.txt")):
        rel = path.relative_to(root).as_posix()
        kind, task, lang_file = rel.split("/")
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        prev = old.get(rel, {})
        entry_version = prev.get("version", "1")
        if prev and prev.get("sha256") != digest:
            entry_version = str(int(entry_version) + 1)
        entries.append({
            "kind": kind,
            "task": task,
            "language": lang_file[:-4],
            "path": rel,
            "version": entry_version,
            "sha256": digest,
            "verbatim": bool(prev.get("verbatim", False)),
        })
    manifest_path.write_text(
        json.dumps({"version": version, "templates": entries}, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    print(f"{len(entries)} templates -> {manifest_path}")


if __name__ == "__main__":
    main()
