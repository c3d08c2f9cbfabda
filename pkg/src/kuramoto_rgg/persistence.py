"""Result files, graph dumps and config files.

Floats are written with Python's shortest round-trip ``repr`` so every
value reads back to the identical double. Output files are first written
with a ``.partial`` suffix and renamed into place once all are complete.
"""
import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .experiments import SUMMARY_COLUMNS, CampaignConfig
from .flow import FlowConfig

RESULT_FILES = ("trials.jsonl", "summary.csv", "table.csv", "config.resolved.json")
TIMINGS_FILE = "timings.csv"


class ConfigError(ValueError):
    """A config file or mapping names an unknown key or carries a bad value."""


class OutputExistsError(FileExistsError):
    pass


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def jsonl_text(records, store_state=False) -> str:
    return "".join(json.dumps(r.to_dict(store_state), sort_keys=True, allow_nan=False) + "\n"
                   for r in records)


def config_json(cfg: CampaignConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n"


def _config_from_mapping(d, source):
    d = dict(d)
    flow = dict(d.pop("flow", {}) or {})
    for key in list(d):
        if key.startswith("flow."):
            flow[key[5:]] = d.pop(key)
    known = set(CampaignConfig.__dataclass_fields__) - {"flow"}
    for key in d:
        if key not in known:
            raise ConfigError(f"{source}: unknown key {key!r}")
    for key in flow:
        if key not in FlowConfig.__dataclass_fields__:
            raise ConfigError(f"{source}: unknown key 'flow.{key}'")
    try:
        return CampaignConfig.from_dict({**d, "flow": flow})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_flat(text, source="<config>") -> dict:
    """Parse ``key = value`` lines; values are JSON literals or bare strings.

    Blank lines and lines starting with ``#`` are ignored.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def flat_text(cfg: CampaignConfig) -> str:
    d = cfg.to_dict()
    flow = d.pop("flow")
    lines = [f"{k} = {json.dumps(v)}" for k, v in sorted(d.items())]
    lines += [f"flow.{k} = {json.dumps(v)}" for k, v in sorted(flow.items())]
    return "\n".join(lines) + "\n"


def config_mapping(path) -> dict:
    """Raw key/value mapping of a JSON or flat config file."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_flat(text, str(path))


def load_config(path) -> CampaignConfig:
    return _config_from_mapping(config_mapping(path), str(path))


def config_from_mapping(d, source="<config>") -> CampaignConfig:
    return _config_from_mapping(d, source)


def check_output_dir(out_dir, names=RESULT_FILES, overwrite=False) -> Path:
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise NotADirectoryError(f"{out} exists and is not a directory")
    clash = [n for n in names if (out / n).exists()]
    if clash and not overwrite:
        raise OutputExistsError(f"{out}: refusing to overwrite {', '.join(clash)}")
    return out


def write_atomic(out_dir, files: dict, overwrite=False):
    """Write ``{name: text}`` into ``out_dir`` via ``.partial`` files and renames."""
    out = check_output_dir(out_dir, list(files), overwrite)
    out.mkdir(parents=True, exist_ok=True)
    partials = []
    for name, text in files.items():
        tmp = out / (name + ".partial")
        try:
            with open(tmp, "w", newline="") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise OSError(f"writing {tmp}: {exc}") from exc
        partials.append((tmp, out / name))
    for tmp, final in partials:
        os.replace(tmp, final)
    return [final for _, final in partials]


def emit_results(result, out_dir, overwrite=False):
    """Write trials.jsonl, summary.csv, table.csv and config.resolved.json.

    Wall-clock timings vary between runs, so they go to a separate
    ``timings.csv`` and the four result files stay byte-reproducible.
    """
    cfg = result.config
    table_cols = list(result.table[0]) if result.table else list(SUMMARY_COLUMNS)
    files = {
        "trials.jsonl": jsonl_text(result.records, cfg.store_states),
        "summary.csv": csv_text(result.summary, SUMMARY_COLUMNS),
        "table.csv": csv_text(result.table, table_cols),
        "config.resolved.json": config_json(cfg),
        TIMINGS_FILE: csv_text([{"cell": r.cell, "trial": r.trial, "wall_time": r.wall_time}
                                for r in result.records], ("cell", "trial", "wall_time")),
    }
    return write_atomic(out_dir, files, overwrite)


def graph_text(g) -> str:
    """Header ``n epsilon variant`` then one ``i j`` (or ``i j w``) line per edge."""
    lines = [f"{g.n} {g.epsilon!r} {g.model.variant}"]
    weighted = g.weights is not None
    for t, (i, j) in enumerate(g.edges):
        lines.append(f"{i} {j} {float(g.weights[t])!r}" if weighted else f"{i} {j}")
    return "\n".join(lines) + "\n"


def read_graph_text(text):
    """Inverse of :func:`graph_text`: ``(n, epsilon, variant, edges, weights)``."""
    rows = text.strip().splitlines()
    n, eps, variant = rows[0].split()
    body = [r.split() for r in rows[1:]]
    edges = np.array([[int(r[0]), int(r[1])] for r in body], dtype=np.int64).reshape(-1, 2)
    weights = None
    if body and len(body[0]) == 3:
        weights = np.array([float(r[2]) for r in body])
    return int(n), float(eps), variant, edges, weights


def trace_text(rows) -> str:
    return csv_text([dict(zip(("step", "time", "energy", "grad_inf_norm"), r)) for r in rows],
                    ("step", "time", "energy", "grad_inf_norm"))
