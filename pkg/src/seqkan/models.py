"""Architecture registry and versioned JSON persistence for all four model kinds."""

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .baselines import LstmModel, RnnModel, match_parameter_count
from .errors import ConfigError, DataError
from .kan import FORMAT_VERSION, SeqKanModel, SeqKanWideModel

ARCHITECTURES = {
    "seqkan": SeqKanModel,
    "seqkan-wide": SeqKanWideModel,
    "rnn": RnnModel,
    "lstm": LstmModel,
}


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def seqkan_param_count():
    return SeqKanModel.create().n_params


def build_model(arch, seed=0):
    """Freshly initialized model; baselines are sized to match seqKAN's parameter count."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHITECTURES)}")
    rng = make_rng(seed)
    if arch in ("seqkan", "seqkan-wide"):
        return ARCHITECTURES[arch].create(rng=rng)
    h_rnn, h_lstm = match_parameter_count(seqkan_param_count())
    return ARCHITECTURES[arch].create(h_rnn if arch == "rnn" else h_lstm, rng=rng)


def model_from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version!r}")
    arch = d.get("architecture")
    if arch not in ARCHITECTURES:
        raise DataError(f"unknown architecture {arch!r} in model file")
    return ARCHITECTURES[arch].from_dict(d)


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_model(model, path):
    atomic_write(path, dumps(model.to_dict()))


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(d)
