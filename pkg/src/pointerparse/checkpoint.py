"""Self-describing checkpoint directories.

Layout::

    <dir>/
      manifest.json      format version, step, configs, metrics snapshot,
                         tensor index (name, shape, offset), RNG bookkeeping
      params.bin         little-endian float32, concatenated in index order
      optstate.bin       Adam first/second moments, same order as params
      symtab.json        target symbol table
      source_vocab.json  encoder word vocabulary

Loading a checkpoint restores training bit-identically on a single thread;
a format-version mismatch is a hard error rather than a best-effort read.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ModelConfig, PointerGeneratorModel
from .vocab import SourceVocab, SymbolTable

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    step: int
    model_config: ModelConfig
    train_config: dict
    symtab: SymbolTable
    source_vocab: SourceVocab
    params: dict[str, np.ndarray]
    opt_m: Optional[dict[str, np.ndarray]]
    opt_v: Optional[dict[str, np.ndarray]]
    opt_step: int
    dropout_counter: int
    metrics: dict
    best_dev_em: Optional[float]

    def build_model(self) -> PointerGeneratorModel:
        model = PointerGeneratorModel(self.model_config, seed=0)
        for name, tensor in model.parameters().items():
            if name not in self.params:
                raise CheckpointError(f"checkpoint missing parameter {name}")
            if tensor.data.shape != self.params[name].shape:
                raise CheckpointError(f"shape mismatch for {name}")
            tensor.data = self.params[name].astype(np.float32).copy()
            tensor.zero_grad()
        return model


def _write_blob(path: Path, arrays: list[np.ndarray]) -> list[int]:
    offsets = []
    with open(path, "wb") as fh:
        pos = 0
        for arr in arrays:
            offsets.append(pos)
            raw = arr.astype("<f4").tobytes()
            fh.write(raw)
            pos += arr.size
    return offsets


def save_checkpoint(
    directory,
    model: PointerGeneratorModel,
    symtab: SymbolTable,
    source_vocab: SourceVocab,
    train_config: dict,
    step: int,
    opt_m: Optional[dict[str, np.ndarray]] = None,
    opt_v: Optional[dict[str, np.ndarray]] = None,
    opt_step: int = 0,
    dropout_counter: int = 0,
    metrics: Optional[dict] = None,
    best_dev_em: Optional[float] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(model.parameters().keys())
    params = [model.parameters()[n].data for n in names]
    offsets = _write_blob(directory / "params.bin", params)
    index = [
        {"name": n, "shape": list(p.shape), "offset": off}
        for n, p, off in zip(names, params, offsets)
    ]
    if opt_m is not None and opt_v is not None:
        moments = [opt_m[n] for n in names] + [opt_v[n] for n in names]
        _write_blob(directory / "optstate.bin", moments)
    manifest = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "model_config": model.config.to_json(),
        "train_config": train_config,
        "params": index,
        "has_opt_state": opt_m is not None and opt_v is not None,
        "opt_step": opt_step,
        "dropout_counter": dropout_counter,
        "metrics": metrics or {},
        "best_dev_em": best_dev_em,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    symtab.save(directory / "symtab.json")
    source_vocab.save(directory / "source_vocab.json")
    return directory


def _read_blob(path: Path, index: list[dict], second_half: bool = False) -> dict[str, np.ndarray]:
    raw = np.fromfile(path, dtype="<f4")
    total = sum(int(np.prod(e["shape"])) for e in index)
    out = {}
    base = total if second_half else 0
    for entry in index:
        size = int(np.prod(entry["shape"]))
        start = base + entry["offset"]
        out[entry["name"]] = raw[start : start + size].reshape(entry["shape"]).copy()
    return out


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {manifest.get('format_version')} != supported {FORMAT_VERSION}"
        )
    index = manifest["params"]
    params = _read_blob(directory / "params.bin", index)
    opt_m = opt_v = None
    if manifest.get("has_opt_state"):
        opt_m = _read_blob(directory / "optstate.bin", index, second_half=False)
        opt_v = _read_blob(directory / "optstate.bin", index, second_half=True)
    return Checkpoint(
        step=int(manifest["step"]),
        model_config=ModelConfig.from_json(manifest["model_config"]),
        train_config=manifest.get("train_config", {}),
        symtab=SymbolTable.load(directory / "symtab.json"),
        source_vocab=SourceVocab.load(directory / "source_vocab.json"),
        params=params,
        opt_m=opt_m,
        opt_v=opt_v,
        opt_step=int(manifest.get("opt_step", 0)),
        dropout_counter=int(manifest.get("dropout_counter", 0)),
        metrics=manifest.get("metrics", {}),
        best_dev_em=manifest.get("best_dev_em"),
    )


def prune_checkpoints(root: Path, keep: int, protect: Optional[Path] = None) -> None:
    """Delete all but the newest ``keep`` step_* checkpoint directories."""
    steps = sorted(
        (p for p in Path(root).glob("step_*") if p.is_dir()),
        key=lambda p: int(p.name.split("_")[1]),
    )
    for stale in steps[:-keep] if keep > 0 else []:
        if protect is not None and stale.resolve() == Path(protect).resolve():
            continue
        shutil.rmtree(stale)
