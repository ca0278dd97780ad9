"""Versioned ``.npz`` container for named parameters plus optimizer state."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import FormatError

CHECKPOINT_VERSION = 1


def save_checkpoint(path, modules: dict, optimizers: dict | None = None, meta: dict | None = None) -> Path:
    """Write ``modules`` (name -> Module) and ``optimizers`` (name -> AdamW)."""
    arrays = {"__version__": np.int64(CHECKPOINT_VERSION),
              "__meta__": np.array(json.dumps(meta or {}, sort_keys=True))}
    for mname, module in modules.items():
        for pname, p in module.named_parameters():
            arrays[f"param/{mname}/{pname}"] = p.data
    for oname, opt in (optimizers or {}).items():
        state = opt.state_dict()
        hyper = {k: state[k] for k in ("lr", "betas", "eps", "weight_decay", "step")}
        arrays[f"optim/{oname}/hyper"] = np.array(json.dumps(hyper))
        for i, (m, v) in enumerate(zip(state["m"], state["v"])):
            arrays[f"optim/{oname}/m/{i}"] = m
            arrays[f"optim/{oname}/v/{i}"] = v
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path, modules: dict, optimizers: dict | None = None) -> dict:
    """Restore into existing modules/optimizers in place; returns the metadata dict."""
    try:
        z = np.load(Path(path), allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from exc
    with z:
        if "__version__" not in z.files or int(z["__version__"]) != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version")
        for mname, module in modules.items():
            prefix = f"param/{mname}/"
            module.load_state_dict({k[len(prefix):]: z[k] for k in z.files if k.startswith(prefix)})
        for oname, opt in (optimizers or {}).items():
            hyper = json.loads(str(z[f"optim/{oname}/hyper"]))
            n = len(opt.params)
            opt.load_state_dict({**hyper,
                                 "m": [z[f"optim/{oname}/m/{i}"] for i in range(n)],
                                 "v": [z[f"optim/{oname}/v/{i}"] for i in range(n)]})
        return json.loads(str(z["__meta__"]))


def save_loss_csv(path, rows: list[dict]) -> Path:
    """Write per-step loss records (dicts sharing the same keys, ``step`` first)."""
    path = Path(path)
    keys = list(rows[0]) if rows else ["step", "loss"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def read_checkpoint_meta(path) -> dict:
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            return json.loads(str(z["__meta__"]))
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from exc
