"""File formats: binary image/sinogram arrays, PGM renders, LAC tables, manifests.

Binary arrays start with a 6-byte magic (``MSIMG1`` for images, ``MSSIN1``
for sinograms), then ``u64`` ndim and ``ndim`` ``u64`` dimensions, followed by
the row-major little-endian ``f64`` payload.
"""
import csv
import hashlib
import io
import os
import tempfile

import numpy as np

__all__ = [
    "atomic_write",
    "write_array",
    "read_array",
    "write_pgm",
    "read_pgm",
    "render_pgm",
    "read_lac_table",
    "write_manifest",
    "manifest_names",
    "verify_manifest",
    "sha256_file",
]

IMAGE_MAGIC = b"MSIMG1"
SINO_MAGIC = b"MSSIN1"


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to ``path`` via a temporary file and rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_array(arr, magic):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    header = np.array([arr.ndim, *arr.shape], dtype="<u8")
    return magic + header.tobytes() + arr.tobytes()


def write_array(path, arr, magic=IMAGE_MAGIC):
    atomic_write(path, encode_array(arr, magic))


def read_array(path, magic=None):
    """Read an ``MSIMG1``/``MSSIN1`` file; ``magic`` optionally pins the kind."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tag = blob[:6]
    if tag not in (IMAGE_MAGIC, SINO_MAGIC) or (magic is not None and tag != magic):
        raise ValueError(f"{path}: unexpected magic {tag!r}")
    ndim = int(np.frombuffer(blob, dtype="<u8", count=1, offset=6)[0])
    shape = tuple(int(x) for x in np.frombuffer(blob, dtype="<u8", count=ndim, offset=14))
    offset = 14 + 8 * ndim
    count = int(np.prod(shape)) if shape else 1
    if len(blob) != offset + 8 * count:
        raise ValueError(f"{path}: payload size does not match header {shape}")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()


def render_pgm(img, lo=None, hi=None):
    """8-bit binary PGM bytes of ``img`` scaled linearly from ``[lo, hi]`` to ``[0, 255]``."""
    img = np.asarray(img, dtype=float)
    lo = float(np.min(img)) if lo is None else float(lo)
    hi = float(np.max(img)) if hi is None else float(hi)
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.rint((img - lo) * scale), 0, 255).astype(np.uint8)
    rows, cols = px.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + px.tobytes()


def write_pgm(path, img, lo=None, hi=None):
    atomic_write(path, render_pgm(img, lo, hi))


def write_labels_pgm(path, labels):
    """Label maps are stored verbatim (values must fit in 0..255)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must lie in 0..255 for PGM export")
    rows, cols = labels.shape
    atomic_write(path, f"P5\n{cols} {rows}\n255\n".encode("ascii")
                 + labels.astype(np.uint8).tobytes())


def read_pgm(path):
    """Read a binary (P5) 8-bit PGM as an integer array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) > 255:
        raise ValueError(f"{path}: only 8-bit binary PGM is supported")
    cols, rows = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(blob, dtype=np.uint8, count=rows * cols, offset=pos + 1)
    return data.reshape(rows, cols).astype(np.int64)


def read_lac_table(path, spectrum):
    """Spectral model from a CSV LAC table and a :class:`SpectrumSpec`.

    The CSV has a header ``energy_kev,<material>,...`` (the first material is
    the background) and one row per grid energy; the table's grid must match
    the spectrum's.
    """
    from .spectral_sim import SpectralModel, bremsstrahlung_spectrum, equal_bins

    if spectrum is None:
        raise ValueError("a LAC table needs a [spectrum] block")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = [h.strip() for h in rows[0]]
    if header[0] != "energy_kev" or len(header) < 2:
        raise ValueError(f"{path}: header must start with energy_kev")
    table = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    energies = table[:, 0]
    sel = (energies >= spectrum.lo - 1e-9) & (energies <= spectrum.hi + 1e-9)
    energies = energies[sel]
    flux = bremsstrahlung_spectrum(energies, spectrum.kvp, total=spectrum.total)
    if spectrum.bins is None:
        edges = equal_bins(energies.size, spectrum.channels)
    else:
        edges = [int(np.searchsorted(energies, b[0])) for b in spectrum.bins]
        edges.append(int(np.searchsorted(energies, spectrum.bins[-1][1], side="right")))
    return SpectralModel(energies=energies, flux=flux, bin_edges=edges,
                         lac=table[sel, 1:].T, names=tuple(header[1:]))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_names(folder, manifest="manifest.sha256"):
    path = os.path.join(folder, manifest)
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split("  ", 1)[1] for line in fh if line.strip()]


def write_manifest(folder, names, manifest="manifest.sha256"):
    """Write ``<sha256>  <name>`` lines (sorted) inside ``folder``.

    Entries of an existing manifest whose files still exist are kept, so
    several commands may share one output folder.
    """
    keep = [n for n in manifest_names(folder, manifest) if os.path.exists(os.path.join(folder, n))]
    out = io.StringIO()
    for name in sorted(set(names) | set(keep)):
        out.write(f"{sha256_file(os.path.join(folder, name))}  {name}\n")
    atomic_write(os.path.join(folder, manifest), out.getvalue())


def verify_manifest(folder, manifest="manifest.sha256"):
    """Names whose current hash differs from the manifest (empty when intact)."""
    bad = []
    with open(os.path.join(folder, manifest), encoding="utf-8") as fh:
        for line in fh:
            digest, name = line.rstrip("\n").split("  ", 1)
            path = os.path.join(folder, name)
            if not os.path.exists(path) or sha256_file(path) != digest:
                bad.append(name)
    return bad
