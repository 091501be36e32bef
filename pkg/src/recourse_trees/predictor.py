"""Black-box classifiers mapping encoded instances to labels in {0, 1}.

Three implementations share the :class:`Predictor` interface: a logistic
regression trained in-process, an ordered rule list read from JSON, and an
external process spoken to over a line-based CSV protocol.
"""

from __future__ import annotations

import csv
import io
import json
import os
import select
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import Dataset, FeatureSchema, SchemaError, format_value


class PredictorError(RuntimeError):
    pass


class Predictor:
    """Deterministic classifier over encoded instance matrices."""

    name = "predictor"

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.name}


class ConstantPredictor(Predictor):
    def __init__(self, label: int):
        if label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        self.label = label
        self.name = f"constant-{label}"

    def predict_batch(self, X):
        return np.full(np.asarray(X).shape[0], self.label, dtype=np.int8)

    def describe(self):
        return {"kind": "constant", "label": self.label}


class _Encoder:
    """Standardize numerics, one-hot categoricals, pass binaries through."""

    def __init__(self, schema: FeatureSchema, X: np.ndarray):
        self.schema = schema
        self.mean = {}
        self.scale = {}
        for j, f in enumerate(schema):
            if f.kind == "numeric":
                sd = float(X[:, j].std())
                self.mean[j] = float(X[:, j].mean())
                self.scale[j] = sd if sd > 0 else 1.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        cols = []
        for j, f in enumerate(self.schema):
            if f.kind == "numeric":
                cols.append(((X[:, j] - self.mean[j]) / self.scale[j])[:, None])
            elif f.kind == "binary":
                cols.append(X[:, j][:, None])
            else:
                codes = X[:, j].astype(np.int64)
                cols.append(np.eye(len(f.categories))[codes])
        return np.hstack(cols) if cols else np.zeros((X.shape[0], 0))

    def to_dict(self):
        return {
            "mean": {str(k): v for k, v in self.mean.items()},
            "scale": {str(k): v for k, v in self.scale.items()},
        }


class LogisticPredictor(Predictor):
    name = "logistic"

    def __init__(self, encoder: _Encoder, weights: np.ndarray, bias: float):
        self.encoder = encoder
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    def decision_function(self, X):
        return self.encoder(X) @ self.weights + self.bias

    def predict_batch(self, X):
        return (self.decision_function(X) >= 0.0).astype(np.int8)

    def describe(self):
        return {
            "kind": "logistic",
            "weights": self.weights.tolist(),
            "bias": self.bias,
            **self.encoder.to_dict(),
        }

    @classmethod
    def from_dict(cls, schema: FeatureSchema, doc: dict) -> "LogisticPredictor":
        enc = _Encoder.__new__(_Encoder)
        enc.schema = schema
        enc.mean = {int(k): float(v) for k, v in doc["mean"].items()}
        enc.scale = {int(k): float(v) for k, v in doc["scale"].items()}
        return cls(enc, np.array(doc["weights"]), doc["bias"])


@dataclass
class LogisticConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    l2: float = 1e-4


def train_logistic(data: Dataset, labels=None, config: LogisticConfig | None = None):
    """Full-batch gradient descent on the mean log-loss; threshold 0.5."""
    config = config or LogisticConfig()
    y = data.labels if labels is None else np.asarray(labels)
    if y is None:
        raise PredictorError("logistic training needs labels")
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise PredictorError("degenerate labels: training data contains a single class")
    enc = _Encoder(data.schema, data.X)
    Z = enc(data.X)
    rng = np.random.default_rng(config.seed)
    w = rng.normal(0.0, 0.01, Z.shape[1])
    b = 0.0
    n = Z.shape[0]
    for _ in range(config.epochs):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        g = p - y
        w -= config.learning_rate * (Z.T @ g / n + config.l2 * w)
        b -= config.learning_rate * float(g.mean())
    return LogisticPredictor(enc, w, b)


_OPS = {
    "<=": np.less_equal,
    "<": np.less,
    ">=": np.greater_equal,
    ">": np.greater,
    "==": np.equal,
    "!=": np.not_equal,
}


class RulePredictor(Predictor):
    """Ordered rules; the first rule whose conditions all hold sets the label."""

    name = "rules"

    def __init__(self, schema: FeatureSchema, rules: list[dict], default: int):
        self.schema = schema
        self.default = _label(default)
        self.rules = []
        for r in rules:
            try:
                conds = r["when"]
                label = _label(r["label"])
            except (KeyError, TypeError):
                raise PredictorError(f"malformed rule {r!r}: needs 'when' and 'label'") from None
            parsed = []
            for c in conds:
                try:
                    name, op, value = c["feature"], c["op"], c["value"]
                except (KeyError, TypeError):
                    raise PredictorError(f"malformed condition {c!r}") from None
                if op not in _OPS:
                    raise PredictorError(f"unknown operator {op!r}")
                try:
                    j = schema.index(name)
                except SchemaError:
                    raise PredictorError(f"rule references unknown feature {name!r}") from None
                f = schema[j]
                if f.kind == "categorical":
                    if op not in ("==", "!="):
                        raise PredictorError(f"{name}: categorical tests must use == or !=")
                    if str(value) not in f.categories:
                        raise PredictorError(f"{name}: unknown category {value!r}")
                    value = float(f.categories.index(str(value)))
                parsed.append((j, _OPS[op], float(value)))
            self.rules.append((parsed, label))
        self._raw = {"rules": rules, "default": default}

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.default, dtype=np.int8)
        undecided = np.ones(X.shape[0], dtype=bool)
        for conds, label in self.rules:
            hit = undecided.copy()
            for j, op, v in conds:
                hit &= op(X[:, j], v)
            out[hit] = label
            undecided &= ~hit
        return out

    def describe(self):
        return {"kind": "rules", **self._raw}


def _label(v) -> int:
    if v not in (0, 1) or isinstance(v, bool):
        raise PredictorError(f"label {v!r} not in {{0,1}}")
    return int(v)


def load_rule_predictor(path: str | Path, schema: FeatureSchema) -> RulePredictor:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise PredictorError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict) or "default" not in doc:
        raise PredictorError(f"{path}: rule file needs 'rules' and 'default'")
    return RulePredictor(schema, doc.get("rules", []), doc["default"])


class ExternalPredictor(Predictor):
    """Long-lived child process speaking the batch CSV protocol.

    Each batch is written as a CSV header plus one row per instance, followed
    by a blank line. The process answers with exactly one ``0``/``1`` line per
    row, in order. Batches are serialized through a lock, so concurrent
    callers wait for one another; large batches are split into chunks so pipe
    buffers cannot deadlock. Output beyond the expected line count, or no
    output for ``read_timeout`` seconds, is an error.
    """

    name = "external"
    chunk_size = 2048

    def __init__(self, command: str, schema: FeatureSchema, read_timeout: float = 60.0):
        self.command = command
        self.schema = schema
        self.read_timeout = read_timeout
        self._lock = threading.Lock()
        self._proc = None
        self._stderr = None
        self._pending = b""

    def _start(self):
        self._stderr = tempfile.TemporaryFile()
        self._pending = b""
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self._stderr,
                bufsize=0,
            )
        except OSError as e:
            raise PredictorError(f"cannot start external predictor {self.command!r}: {e}") from None

    def _read_chunk(self, timeout: float) -> bytes | None:
        """Bytes available on stdout within ``timeout``; ``b""`` at EOF, ``None`` if none came."""
        fd = self._proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], timeout)
        if not ready:
            return None
        return os.read(fd, 65536)

    def _readline(self) -> bytes:
        while b"\n" not in self._pending:
            chunk = self._read_chunk(self.read_timeout)
            if chunk is None:
                self._fail(f"external predictor sent no output for {self.read_timeout:g}s")
            if not chunk:
                line, self._pending = self._pending, b""
                return line
            self._pending += chunk
        line, self._pending = self._pending.split(b"\n", 1)
        return line + b"\n"

    def _fail(self, msg: str):
        proc = self._proc
        code = None
        if proc is not None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                code = proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                proc.kill()
                code = proc.wait()
        err = ""
        if self._stderr is not None:
            self._stderr.seek(0)
            err = self._stderr.read().decode(errors="replace").strip()
        self._proc = None
        detail = f"{msg}; exit code {code}"
        if err:
            detail += f"; stderr: {err}"
        raise PredictorError(detail)

    def _exchange(self, X: np.ndarray) -> np.ndarray:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.schema.names)
        for row in X:
            w.writerow([format_value(f, v) for f, v in zip(self.schema, row)])
        buf.write("\n")
        try:
            self._proc.stdin.write(buf.getvalue().encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._fail("external predictor closed its input")
        labels = np.empty(X.shape[0], dtype=np.int8)
        for i in range(X.shape[0]):
            line = self._readline()
            if not line:
                self._fail(f"external predictor returned {i} labels for a batch of {X.shape[0]}")
            token = line.decode(errors="replace").strip()
            if token not in ("0", "1"):
                self._fail(f"external predictor emitted {token!r}, expected 0 or 1")
            labels[i] = int(token)
        extra = self._pending or self._read_chunk(0.0)
        if extra:
            self._fail(f"external predictor returned more than {X.shape[0]} labels")
        return labels

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                if self._proc is not None:
                    self._fail("external predictor exited")
                self._start()
            parts = [
                self._exchange(X[s : s + self.chunk_size])
                for s in range(0, X.shape[0], self.chunk_size)
            ]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int8)

    def close(self):
        with self._lock:
            if self._proc is not None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                self._proc = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def describe(self):
        return {"kind": "external", "command": self.command}


def external_predictor(command: str, schema: FeatureSchema) -> ExternalPredictor:
    return ExternalPredictor(command, schema)
