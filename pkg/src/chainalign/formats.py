"""File formats: model files, sequence files, params cache, result rows.

The model file is JSON with exactly the keys ``alphabet``, ``P``, ``Q``,
``score`` and optionally ``lattice``; unknown keys are rejected.
``alphabet`` is either a size or a list of single-character symbols; with
symbols declared, sequence files hold one string of symbols per line,
otherwise one line of whitespace-separated indices per sequence.
"""

from __future__ import annotations

import hashlib
import json
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .errors import ModelFileError
from .ladder import GumbelParams
from .model import ScoreModel, validate_model
from .montecarlo import ValidationRun

try:
    VERSION = version("chainalign")
except PackageNotFoundError:  # pragma: no cover - not installed
    VERSION = "0.0.0"

SCHEMA_VERSION = 1

_MODEL_KEYS = {"alphabet", "P", "Q", "score", "lattice"}
_SCORE_KEYS = {"pair", "transition"}


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ModelFileError(f"{path}: file not found")
    except json.JSONDecodeError as e:
        raise ModelFileError(f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}")


def load_model(path: str) -> ScoreModel:
    """Read and validate a model file."""
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise ModelFileError(f"{path}: top level must be an object")
    unknown = set(raw) - _MODEL_KEYS
    if unknown:
        raise ModelFileError(f"{path}: unknown keys {sorted(unknown)}")
    missing = {"alphabet", "P", "Q", "score"} - set(raw)
    if missing:
        raise ModelFileError(f"{path}: missing keys {sorted(missing)}")

    alphabet = raw["alphabet"]
    symbols = None
    if isinstance(alphabet, int):
        E = alphabet
    elif isinstance(alphabet, list) and all(isinstance(s, str) for s in alphabet):
        if any(len(s) != 1 for s in alphabet):
            raise ModelFileError(f"{path}: alphabet symbols must be single characters")
        if len(set(alphabet)) != len(alphabet):
            raise ModelFileError(f"{path}: alphabet symbols must be distinct")
        symbols = tuple(alphabet)
        E = len(symbols)
    else:
        raise ModelFileError(f"{path}: alphabet must be an integer size or a list of symbols")

    score = raw["score"]
    if not isinstance(score, dict) or set(score) - _SCORE_KEYS or len(score) != 1:
        raise ModelFileError(f"{path}: score must be an object with exactly one of {sorted(_SCORE_KEYS)}")
    transition = "transition" in score
    table = score["transition"] if transition else score["pair"]

    lattice = raw.get("lattice")
    if lattice is not None and not isinstance(lattice, bool):
        raise ModelFileError(f"{path}: lattice must be a boolean")

    try:
        return validate_model(
            E, raw["P"], raw["Q"], table,
            transition=transition, lattice=lattice, symbols=symbols,
        )
    except ValueError as e:
        raise ModelFileError(f"{path}: {e}")


def save_model(path: str, model: ScoreModel) -> None:
    doc = {
        "alphabet": list(model.symbols) if model.symbols else model.alphabet_size,
        "P": model.P.tolist(),
        "Q": model.Q.tolist(),
        "score": (
            {"transition": model.score.table.tolist()}
            if model.is_transition
            else {"pair": model.score.table.tolist()}
        ),
        "lattice": model.lattice,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def parse_sequence_line(line: str, model: ScoreModel, lineno: int, path: str) -> np.ndarray:
    line = line.strip()
    if model.symbols:
        idx = {c: k for k, c in enumerate(model.symbols)}
        out = np.empty(len(line), np.int32)
        for pos, ch in enumerate(line):
            if ch not in idx:
                raise ModelFileError(
                    f"{path}: line {lineno}, position {pos + 1}: symbol {ch!r} "
                    f"is not in the model alphabet"
                )
            out[pos] = idx[ch]
        return out
    toks = line.split()
    out = np.empty(len(toks), np.int32)
    for pos, tok in enumerate(toks):
        try:
            v = int(tok)
        except ValueError:
            raise ModelFileError(f"{path}: line {lineno}, token {pos + 1}: {tok!r} is not an index")
        if not 0 <= v < model.alphabet_size:
            raise ModelFileError(
                f"{path}: line {lineno}, token {pos + 1}: index {v} outside alphabet "
                f"of size {model.alphabet_size}"
            )
        out[pos] = v
    return out


def load_sequences(path: str, model: ScoreModel) -> list[np.ndarray]:
    """One sequence per line; empty lines are skipped."""
    out = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    out.append(parse_sequence_line(line, model, lineno, path))
    except FileNotFoundError:
        raise ModelFileError(f"{path}: file not found")
    return out


def model_sha256(model: ScoreModel) -> str:
    h = hashlib.sha256()
    h.update(repr(model.alphabet_size).encode())
    for arr in (model.P, model.Q, model.score.table):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(b"transition" if model.is_transition else b"pair")
    return h.hexdigest()


def config_sha256(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# params cache


def save_params(path: str, params: GumbelParams, meta: dict) -> None:
    doc = {
        "version": SCHEMA_VERSION,
        "theta_star": params.theta_star,
        "K_star": params.K_star,
        "K_star_stderr": params.K_star_stderr,
        "lattice": params.lattice,
        **meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path: str) -> tuple[GumbelParams, dict]:
    doc = _load_json(path)
    try:
        params = GumbelParams(
            theta_star=float(doc["theta_star"]),
            K_star=float(doc["K_star"]),
            lattice=bool(doc["lattice"]),
            K_star_stderr=float(doc.get("K_star_stderr", 0.0)),
        )
    except KeyError as e:
        raise ModelFileError(f"{path}: params cache is missing {e}")
    meta = {k: v for k, v in doc.items() if k not in ("theta_star", "K_star", "K_star_stderr", "lattice")}
    return params, meta


# ---------------------------------------------------------------------------
# result rows

CSV_COLUMNS = ("n", "x", "t_n", "x_n", "lambda", "tv", "p_hat", "gumbel_target", "ci_lo", "ci_hi")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _run_row(run: ValidationRun) -> dict:
    return {
        "n": run.n_x,
        "x": run.x,
        "t_n": run.t_n,
        "x_n": run.x_n,
        "lambda": run.target_lambda,
        "tv": run.tv_distance,
        "p_hat": run.p_hat,
        "gumbel_target": run.gumbel_target,
        "ci_lo": run.ci_lo,
        "ci_hi": run.ci_hi,
    }


def header_lines(seed: int, config: dict) -> list[str]:
    return [
        f"# chainalign {VERSION} schema={SCHEMA_VERSION}",
        f"# seed={seed} config_sha256={config_sha256(config)}",
    ]


def write_csv(path: str, runs: list[ValidationRun], seed: int, config: dict) -> None:
    lines = header_lines(seed, config)
    lines.append(",".join(CSV_COLUMNS))
    for run in runs:
        row = _run_row(run)
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json_lines(path: str, runs: list[ValidationRun], seed: int, config: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        meta = {
            "meta": {
                "version": VERSION,
                "schema": SCHEMA_VERSION,
                "seed": seed,
                "config_sha256": config_sha256(config),
            }
        }
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for run in runs:
            row = _run_row(run)
            row.update(
                n_y=run.n_y,
                replicates=run.replicates,
                counts_hist=run.counts_hist.tolist(),
                mean_c=run.mean_c,
                mean_ci_lo=run.mean_ci_lo,
                mean_ci_hi=run.mean_ci_hi,
                bias_allowance=run.bias_allowance,
            )
            fh.write(json.dumps(row, sort_keys=True) + "\n")
