"""Download the public regression datasets and write CSV + schema files.

The source files are one-hot encoded already. Groups of 0/1 columns sharing
a ``<feature>_<level>`` prefix are folded back into a single label column so
that the library's own encoder reproduces them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
import urllib.error
import urllib.request
from pathlib import Path

from .dataset import FeatureSchema, save_schema

DEFAULT_BASE_URL = "https://raw.githubusercontent.com/jagielski/manip-ml/master/datasets"
# source file name, response column (None = last column)
SOURCES = {
    "house": ("house-processed.csv", None),
    "healthcare": ("healthcare-processed.csv", None),
}
SUBSETS = {"cat5": 5, "cat10": 10, "catall": None}
MISSING_LABEL = "__none__"


class FetchError(OSError):
    """Network or filesystem failure while fetching."""


class IntegrityError(OSError):
    """Downloaded content does not match the recorded checksum."""


def data_dir(override=None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("POISONFORGE_DATA_DIR", "data"))


def _download(url: str, timeout: float) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"could not download {url}: {exc}. Check network access and retry.") from exc


def fold_one_hot(header: list[str], rows: list[list[str]], response: str | None = None):
    """Split columns into numerical ones and one-hot groups; return (schema, table rows, header)."""
    response = response or header[-1]
    features = [h for h in header if h != response]
    cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}

    def binary(h):
        return all(v.strip() in ("0", "1", "0.0", "1.0") for v in cols[h])

    groups: dict[str, list[str]] = {}
    for h in features:
        if "_" in h and binary(h):
            groups.setdefault(h.rsplit("_", 1)[0], []).append(h)
    groups = {g: members for g, members in groups.items() if len(members) >= 2}
    grouped = {h for members in groups.values() for h in members}
    numerical = [h for h in features if h not in grouped]

    cat_specs, label_cols = [], []
    for g, members in groups.items():
        labels = [h.rsplit("_", 1)[1] for h in members]
        active = [[float(cols[h][i]) == 1.0 for h in members] for i in range(len(rows))]
        if any(sum(a) > 1 for a in active):
            numerical.extend(members)
            continue
        if any(sum(a) == 0 for a in active):
            labels.append(MISSING_LABEL)
        if len(set(labels)) != len(labels):
            numerical.extend(members)
            continue
        cat_specs.append((g, tuple(labels)))
        label_cols.append([labels[a.index(True)] if any(a) else MISSING_LABEL for a in active])

    numerical = [h for h in features if h in set(numerical)]
    schema = FeatureSchema(tuple(numerical), tuple(cat_specs), response)
    out_header = numerical + [g for g, _ in cat_specs] + [response]
    out_rows = []
    for i in range(len(rows)):
        out_rows.append([cols[h][i] for h in numerical] + [lc[i] for lc in label_cols] + [cols[response][i]])
    return schema, out_header, out_rows


def subset_schema(schema: FeatureSchema, n_cat: int | None, names=None) -> FeatureSchema:
    """Keep all numerical features and the first ``n_cat`` categorical ones (or those named)."""
    if names:
        by_name = dict(schema.categorical_specs)
        missing = [n for n in names if n not in by_name]
        if missing:
            raise ValueError(f"unknown categorical features {missing}")
        specs = tuple((n, by_name[n]) for n in names)
    else:
        specs = schema.categorical_specs if n_cat is None else schema.categorical_specs[:n_cat]
    return FeatureSchema(schema.numerical_names, specs, schema.response)


def fetch(dest=None, base_url: str = DEFAULT_BASE_URL, timeout: float = 30.0, cat_features=None) -> dict:
    """Fetch every source, write ``<name>.csv`` and ``<name>_<subset>.schema.json`` atomically.

    Nothing is written to ``dest`` unless every download succeeds.
    Returns the manifest that is also written to ``manifest.json``.
    """
    dest = data_dir(dest)
    old_manifest = {}
    if (dest / "manifest.json").exists():
        old_manifest = json.loads((dest / "manifest.json").read_text())

    manifest = {"base_url": base_url, "files": {}}
    staging = Path(tempfile.mkdtemp(prefix="poisonforge-fetch-"))
    try:
        for name, (filename, response) in SOURCES.items():
            url = f"{base_url.rstrip('/')}/{filename}"
            content = _download(url, timeout)
            digest = hashlib.sha256(content).hexdigest()
            recorded = old_manifest.get("files", {}).get(name, {}).get("sha256")
            if recorded and recorded != digest:
                raise IntegrityError(f"{url}: sha256 {digest} does not match recorded {recorded}")
            reader = csv.reader(io.StringIO(content.decode("utf-8")))
            header = [h.strip() for h in next(reader)]
            rows = [r for r in reader if r]
            schema, out_header, out_rows = fold_one_hot(header, rows, response)
            with open(staging / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(out_header)
                writer.writerows(out_rows)
            schemas = {}
            for label, n_cat in SUBSETS.items():
                sub = subset_schema(schema, n_cat, cat_features if label != "catall" else None)
                path = staging / f"{name}_{label}.schema.json"
                save_schema(sub, path)
                schemas[label] = path.name
            manifest["files"][name] = {
                "url": url, "sha256": digest, "csv": f"{name}.csv", "schemas": schemas,
                "n_rows": len(out_rows), "n_numerical": schema.m, "n_categorical": schema.t,
            }
        (staging / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        dest.mkdir(parents=True, exist_ok=True)
        for item in sorted(staging.iterdir()):
            os.replace(item, dest / item.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return manifest
