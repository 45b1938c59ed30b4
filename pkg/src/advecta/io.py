"""Text file formats, atomic writes and image emitters.

Formats (all whitespace-separated decimal text, ``repr`` precision so values
round-trip exactly):

* frame: ``GRID n1 n2`` then ``n1`` rows of ``n2`` values; a sequence puts
  ``FRAME t`` before each frame.
* spectrum: ``SPEC K n1 n2 form`` then ``K`` values, one per line.
* matrix: ``GMAT K`` then ``K`` rows of ``K`` values.
* filter output: ``STEP t``, a ``MEAN`` row and optionally a ``COV`` row
  holding the lower triangle by rows.
* truth sidecar: ``TRUTH K n1 n2 form`` then per step ``STEP t`` with
  ``ALPHA`` and ``BETA`` rows.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .spectral import GridSpec


def _fmt(x) -> str:
    return repr(float(x))


def _row(values) -> str:
    return " ".join(_fmt(v) for v in np.ravel(values))


def atomic_write(path, data) -> Path:
    """Write text or bytes to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Lines:
    """Line cursor that skips blanks and reports 1-based line numbers in errors."""

    def __init__(self, text: str, source: str):
        self.lines = text.splitlines()
        self.source = source
        self.i = 0

    def error(self, msg, lineno=None) -> DataValidationError:
        n = self.i if lineno is None else lineno
        return DataValidationError(f"{self.source}:{n}: {msg}")

    def _skip(self):
        while self.i < len(self.lines) and not self.lines[self.i].strip():
            self.i += 1

    def at_end(self) -> bool:
        self._skip()
        return self.i >= len(self.lines)

    def next(self, what="a line") -> list[str]:
        self._skip()
        if self.i >= len(self.lines):
            raise self.error(f"unexpected end of file, expected {what}", len(self.lines))
        self.i += 1
        return self.lines[self.i - 1].split()

    def peek_tag(self) -> str | None:
        self._skip()
        if self.i >= len(self.lines):
            return None
        parts = self.lines[self.i].split()
        return parts[0] if parts else None

    def header(self, tag, n_ints=0, n_floats=0):
        parts = self.next(f"'{tag}' header")
        if not parts or parts[0] != tag:
            raise self.error(f"expected '{tag}' header, got {' '.join(parts)[:40]!r}")
        if len(parts) != 1 + n_ints + n_floats:
            raise self.error(f"'{tag}' header needs {n_ints + n_floats} values, got {len(parts) - 1}")
        try:
            ints = [int(p) for p in parts[1:1 + n_ints]]
            floats = [float(p) for p in parts[1 + n_ints:]]
        except ValueError:
            raise self.error(f"malformed '{tag}' header") from None
        return ints + floats

    def floats(self, count, what="values", tag=None) -> np.ndarray:
        parts = self.next(what)
        if tag is not None:
            if not parts or parts[0] != tag:
                raise self.error(f"expected '{tag}' row")
            parts = parts[1:]
        if len(parts) != count:
            raise self.error(f"expected {count} {what}, got {len(parts)}")
        try:
            out = np.array([float(p) for p in parts])
        except ValueError:
            raise self.error(f"non-numeric entry in {what}") from None
        if not np.all(np.isfinite(out)):
            raise self.error(f"non-finite entry in {what}")
        return out


def _read(path) -> tuple[str, str]:
    p = Path(path)
    try:
        return p.read_text(), str(p)
    except OSError as exc:
        raise DataValidationError(f"cannot read {p}: {exc}") from exc


# -- frames -----------------------------------------------------------------


def format_frame(field) -> str:
    f = np.asarray(field, dtype=float)
    GridSpec.from_shape(f.shape)
    return "\n".join([f"GRID {f.shape[0]} {f.shape[1]}"] + [_row(r) for r in f]) + "\n"


def format_frames(frames, times) -> str:
    return "".join(f"FRAME {_fmt(t)}\n" + format_frame(f) for f, t in zip(frames, times))


def _parse_grid(cur: _Lines) -> np.ndarray:
    n1, n2 = cur.header("GRID", 2)
    try:
        GridSpec(n1, n2)
    except ValueError as exc:
        raise cur.error(str(exc)) from None
    return np.stack([cur.floats(n2, "grid row values") for _ in range(n1)])


def parse_frames(text: str, source: str = "<frames>"):
    """Return ``(frames (T, n1, n2), times)``; a bare ``GRID`` block is one frame at t=0."""
    cur = _Lines(text, source)
    if cur.peek_tag() == "GRID":
        f = _parse_grid(cur)
        if not cur.at_end():
            raise cur.error("trailing content after frame", cur.i + 1)
        return f[None], np.zeros(1)
    frames, times = [], []
    while not cur.at_end():
        (t,) = cur.header("FRAME", 0, 1)
        f = _parse_grid(cur)
        if frames and f.shape != frames[0].shape:
            raise cur.error(f"frame shape {f.shape} differs from first frame {frames[0].shape}")
        frames.append(f)
        times.append(t)
    if not frames:
        raise cur.error("no frames found", 1)
    return np.stack(frames), np.array(times)


def read_frames(path):
    text, src = _read(path)
    return parse_frames(text, src)


def write_frames(path, frames, times) -> Path:
    return atomic_write(path, format_frames(frames, times))


# -- spectra and matrices ------------------------------------------------------


def format_spectrum(vec, sets) -> str:
    n1, n2 = sets.grid.shape
    v = np.ravel(vec)
    return f"SPEC {v.size} {n1} {n2} {sets.form}\n" + "\n".join(_fmt(x) for x in v) + "\n"


def parse_spectrum(text: str, source: str = "<spectrum>"):
    """Return ``(vector, (n1, n2), form)``."""
    cur = _Lines(text, source)
    K, n1, n2, form = cur.header("SPEC", 4)
    if form not in (16, 18):
        raise cur.error(f"form must be 16 or 18, got {form}")
    vec = np.array([cur.floats(1, "spectral value")[0] for _ in range(K)])
    if not cur.at_end():
        raise cur.error("trailing content after spectrum", cur.i + 1)
    return vec, (n1, n2), form


def format_matrix(G) -> str:
    g = np.asarray(getattr(G, "g", G), dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("matrix must be square")
    return f"GMAT {g.shape[0]}\n" + "\n".join(_row(r) for r in g) + "\n"


def parse_matrix(text: str, source: str = "<matrix>") -> np.ndarray:
    cur = _Lines(text, source)
    (K,) = cur.header("GMAT", 1)
    g = np.stack([cur.floats(K, "matrix row values") for _ in range(K)]) if K else np.zeros((0, 0))
    if not cur.at_end():
        raise cur.error("trailing content after matrix", cur.i + 1)
    return g


# -- filter output and truth sidecar ------------------------------------------


def format_filter_output(times, beliefs, with_cov: bool = False) -> str:
    out = []
    for t, b in zip(times, beliefs):
        out.append(f"STEP {_fmt(t)}")
        out.append("MEAN " + _row(b.mean))
        if with_cov:
            out.append("COV " + _row(b.cov[np.tril_indices(b.cov.shape[0])]))
    return "\n".join(out) + "\n"


def parse_filter_output(text: str, source: str = "<filter>"):
    """Return ``[(t, mean, cov_or_None), ...]``."""
    cur = _Lines(text, source)
    out = []
    while not cur.at_end():
        (t,) = cur.header("STEP", 0, 1)
        parts = cur.next("MEAN row")
        if not parts or parts[0] != "MEAN":
            raise cur.error("expected 'MEAN' row")
        try:
            mean = np.array([float(p) for p in parts[1:]])
        except ValueError:
            raise cur.error("non-numeric entry in MEAN row") from None
        cov = None
        if cur.peek_tag() == "COV":
            n = mean.size
            tri = cur.floats(n * (n + 1) // 2, "lower-triangle values", tag="COV")
            cov = np.zeros((n, n))
            cov[np.tril_indices(n)] = tri
            cov = cov + np.tril(cov, -1).T
        out.append((t, mean, cov))
    return out


def format_truth(times, alpha, beta, sets) -> str:
    n1, n2 = sets.grid.shape
    out = [f"TRUTH {sets.dim} {n1} {n2} {sets.form}"]
    for t, a, b in zip(times, alpha, beta):
        out += [f"STEP {_fmt(t)}", "ALPHA " + _row(a), "BETA " + _row(b)]
    return "\n".join(out) + "\n"


def parse_truth(text: str, source: str = "<truth>"):
    """Return ``(times, alpha (T, K), beta (T, K), (n1, n2), form)``."""
    cur = _Lines(text, source)
    K, n1, n2, form = cur.header("TRUTH", 4)
    times, al, be = [], [], []
    while not cur.at_end():
        (t,) = cur.header("STEP", 0, 1)
        times.append(t)
        al.append(cur.floats(K, "alpha values", tag="ALPHA"))
        be.append(cur.floats(K, "beta values", tag="BETA"))
    return np.array(times), np.array(al), np.array(be), (n1, n2), form


# -- images -------------------------------------------------------------------


def to_gray(field):
    """Linear min-max map to ``0..255``; returns ``(pixels, lo, hi)``. Constant fields map to 128."""
    f = np.asarray(field, dtype=float)
    lo, hi = float(f.min()), float(f.max())
    if hi > lo:
        px = np.rint((f - lo) / (hi - lo) * 255.0)
    else:
        px = np.full(f.shape, 128.0)
    return px.astype(np.uint8), lo, hi


def encode_pgm(pixels) -> bytes:
    """Binary PGM (P5, maxval 255); rows follow axis 0."""
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataValidationError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise DataValidationError("not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise DataValidationError("only maxval 255 is supported")
    body = data[pos + 1:]
    if len(body) != w * h:
        raise DataValidationError(f"PGM body has {len(body)} bytes, expected {w * h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def quiver_svg(velocity, subsample: int = 1, cell: float = 20.0, scale: float | None = None) -> str:
    """SVG with one line segment per ``subsample``-th grid point in row-major order.

    Image rows follow axis 0 (``s1``) like the PGM output; ``s2`` runs across.
    """
    if int(subsample) != subsample or subsample < 1:
        raise ValueError("subsample must be a positive integer")
    v = np.asarray(velocity, dtype=float)
    n1, n2 = v.shape[:2]
    speed = np.sqrt((v**2).sum(-1))
    if scale is None:
        scale = 0.9 * cell / max(float(speed.max()), 1e-300)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{n2 * cell:g}" height="{n1 * cell:g}">'
    ]
    for flat in range(0, n1 * n2, subsample):
        i, j = divmod(flat, n2)
        y0, x0 = (i + 0.5) * cell, (j + 0.5) * cell
        y1, x1 = y0 + scale * v[i, j, 0], x0 + scale * v[i, j, 1]
        lines.append(
            f'<line x1="{x0:.3f}" y1="{y0:.3f}" x2="{x1:.3f}" y2="{y1:.3f}" stroke="black"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
