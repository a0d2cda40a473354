import json
from pathlib import Path

import pytest

from semidrec import pipeline

REPO_ROOT = Path(__file__).resolve().parents[1]
MINI_DIR = REPO_ROOT / "data" / "mini"


def small_config(workdir, **overrides):
    """A fast pipeline config over the bundled mini corpus."""
    raw = {
        "paths": {
            "reviews": str(MINI_DIR / "reviews.jsonl"),
            "metadata": str(MINI_DIR / "meta.jsonl"),
            "workdir": str(workdir),
        },
        "embed": {"provider": "hashing", "D": 32, "seed": 7},
        "rqvae": {"K": 32, "p": 3, "d_code": 12, "hidden": 48, "beta": 0.25,
                  "epochs": 6, "batch_size": 64, "lr": 0.001, "seed": 7},
        "index": {"mode": "P-ID"},
        "prompts": {"total": 180, "seed": 7},
        "rank": {"retriever": "cooc", "scorer": "overlap", "top_k": 20,
                 "scorer_seed": 7},
        "eval": {"ks": [5, 10]},
    }
    for section, fields in overrides.items():
        raw.setdefault(section, {}).update(fields)
    return raw


def write_config(path, raw):
    path.write_text(json.dumps(raw, indent=2))
    return path


@pytest.fixture(scope="session")
def mini_run(tmp_path_factory):
    """One full pipeline run shared by read-only assertions."""
    base = tmp_path_factory.mktemp("mini_run")
    workdir = base / "work"
    raw = small_config(workdir)
    config_path = write_config(base / "config.json", raw)
    cfg = pipeline.validate_config(raw)
    report = pipeline.cmd_all(cfg)
    return {"cfg": cfg, "report": report, "config_path": config_path,
            "workdir": workdir, "raw": raw}
