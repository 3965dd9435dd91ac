"""Plain-text file formats: headerless numeric CSV, trajectory CSV, binary PPM."""
import csv
import math

import numpy as np

from .errors import InputError


def read_matrix_csv(path):
    """Headerless numeric CSV -> 2-D float array. Errors name the line."""
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric entry in {row!r}") from None
            if not all(math.isfinite(x) for x in values):
                raise InputError(f"{path}:{lineno}: non-finite entry")
            if rows and len(values) != len(rows[0]):
                raise InputError(f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(values)}")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def read_vector_csv(path):
    """A weight vector stored either as one row or as one column."""
    M = read_matrix_csv(path)
    if M.shape[0] != 1 and M.shape[1] != 1:
        raise InputError(f"{path}: expected a single row or column, got shape {M.shape}")
    return M.ravel()


def write_matrix_csv(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for row in M:
            out.writerow([repr(float(x)) for x in row])


def write_trajectory_csv(path, traj):
    m = len(traj.counts[0]) if len(traj) else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["iter", "loss", "transport_cost", "marginal_err"] + [f"count_{j}" for j in range(m)])
        for k, loss, cost, err, *counts in traj.rows():
            out.writerow([k, repr(float(loss)), repr(float(cost)), repr(float(err)), *counts])


def write_ppm(path, image):
    """Binary P6; values in [-1, 1] map linearly onto 0..255."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"PPM needs an h x w x 3 image, got shape {img.shape}")
    levels = np.clip(np.rint((np.clip(img, -1.0, 1.0) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P6":
        raise InputError(f"{path}: not a binary PPM")
    w, h, maxval = (int(x) for x in fields[1:])
    pix = np.frombuffer(data[pos : pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return pix.astype(np.float64) / (maxval / 2.0) - 1.0
