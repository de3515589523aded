"""ENVI cube reading plus the flat raster formats used for pipeline outputs.

Cubes arrive as an ENVI text header describing a raw binary raster stored
band-sequential (BSQ), band-interleaved-by-line (BIL) or
band-interleaved-by-pixel (BIP).  Everything is held in memory band-major as
float64.  Outputs are binary PGM (P5) for quick looks and raw little-endian
float32 rasters with a tiny text sidecar so results round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IoFailure,
    MissingField,
    NonFiniteValue,
    SizeMismatch,
    UnsupportedValue,
)

# ENVI numeric data-type codes this reader accepts; the four cover airborne
# hyperspectral products.  Unknown codes raise instead of being misread.
_DATA_TYPE_CODES = {2: "int16", 12: "uint16", 4: "float32", 5: "float64"}
_INTERLEAVES = ("bsq", "bil", "bip")
_REQUIRED_KEYS = ("samples", "lines", "bands", "interleave", "data type")


@dataclass(frozen=True)
class EnviHeader:
    samples: int
    lines: int
    bands: int
    interleave: str                      # "bsq" | "bil" | "bip"
    data_type: str                       # "int16" | "uint16" | "float32" | "float64"
    byte_order: str = "little"           # "little" | "big"
    header_offset: int = 0
    wavelengths: tuple[float, ...] | None = None

    @property
    def dtype(self) -> np.dtype:
        base = np.dtype(self.data_type)
        return base.newbyteorder("<" if self.byte_order == "little" else ">")

    @property
    def raster_bytes(self) -> int:
        return self.samples * self.lines * self.bands * self.dtype.itemsize


@dataclass(frozen=True)
class HyperspectralCube:
    """Band-major radiance/reflectance raster: values[band, row, col]."""

    values: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("cube values must be a (bands, height, width) array")
        if not np.isfinite(self.values).all():
            raise NonFiniteValue("cube contains NaN or infinite values")
        if self.wavelengths is not None and len(self.wavelengths) != self.values.shape[0]:
            raise ValueError("wavelength list length must equal band count")

    @property
    def band_count(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def band(self, n: int) -> "ScalarField":
        return ScalarField(self.values[n])

    def pixel_matrix(self) -> np.ndarray:
        """All spectra as a (pixels, bands) matrix, row-major pixel order."""
        b, h, w = self.values.shape
        return self.values.reshape(b, h * w).T


@dataclass(frozen=True)
class ScalarField:
    """One finite real value per pixel: values[row, col]."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("field values must be a (height, width) array")
        if not np.isfinite(self.values).all():
            raise NonFiniteValue("field contains NaN or infinite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def parse_envi_header(text: str) -> EnviHeader:
    """Parse ENVI ``key = value`` header text.

    Keys are matched case-insensitively, unknown keys are ignored, and
    brace-delimited lists (e.g. wavelength tables) may span multiple lines.
    """
    entries = _collect_entries(text)

    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise MissingField(f"header is missing '{key}'")

    samples = _parse_positive_int(entries, "samples")
    lines = _parse_positive_int(entries, "lines")
    bands = _parse_positive_int(entries, "bands")

    interleave = entries["interleave"].strip().lower()
    if interleave not in _INTERLEAVES:
        raise UnsupportedValue(f"interleave '{interleave}' not in {_INTERLEAVES}")

    code_text = entries["data type"].strip()
    try:
        code = int(code_text)
    except ValueError:
        raise UnsupportedValue(f"data type '{code_text}' is not an integer code") from None
    if code not in _DATA_TYPE_CODES:
        raise UnsupportedValue(
            f"data type {code} unsupported (supported codes: {sorted(_DATA_TYPE_CODES)})"
        )

    byte_order = "little"
    if "byte order" in entries:
        order_text = entries["byte order"].strip()
        if order_text == "0":
            byte_order = "little"
        elif order_text == "1":
            byte_order = "big"
        else:
            raise UnsupportedValue(f"byte order '{order_text}' must be 0 or 1")

    header_offset = 0
    if "header offset" in entries:
        try:
            header_offset = int(entries["header offset"].strip())
        except ValueError:
            raise UnsupportedValue("header offset is not an integer") from None
        if header_offset < 0:
            raise UnsupportedValue("header offset must be non-negative")

    wavelengths = None
    if "wavelength" in entries:
        wavelengths = _parse_wavelengths(entries["wavelength"], bands)

    return EnviHeader(
        samples=samples,
        lines=lines,
        bands=bands,
        interleave=interleave,
        data_type=_DATA_TYPE_CODES[code],
        byte_order=byte_order,
        header_offset=header_offset,
        wavelengths=wavelengths,
    )


def load_cube(header: EnviHeader, raster: bytes) -> HyperspectralCube:
    """Decode raw raster bytes into a band-major float64 cube.

    BIL/BIP layouts are re-laid-out to band-major; declared byte order is
    honored.  Trailing bytes beyond the declared extent are tolerated.
    """
    needed = header.header_offset + header.raster_bytes
    if len(raster) < needed:
        raise SizeMismatch(
            f"raster holds {len(raster)} bytes but header requires {needed}"
        )

    count = header.samples * header.lines * header.bands
    flat = np.frombuffer(raster, dtype=header.dtype, count=count, offset=header.header_offset)

    if header.interleave == "bsq":
        data = flat.reshape(header.bands, header.lines, header.samples)
    elif header.interleave == "bil":
        data = flat.reshape(header.lines, header.bands, header.samples).transpose(1, 0, 2)
    else:  # bip
        data = flat.reshape(header.lines, header.samples, header.bands).transpose(2, 0, 1)

    values = np.ascontiguousarray(data, dtype=np.float64)
    if not np.isfinite(values).all():
        raise NonFiniteValue("raster contains NaN or infinite samples")

    wavelengths = None
    if header.wavelengths is not None:
        wavelengths = np.asarray(header.wavelengths, dtype=np.float64)
    return HyperspectralCube(values=values, wavelengths=wavelengths)


def read_envi_cube(header_path: Path, raster_path: Path | None = None) -> HyperspectralCube:
    """Read header + raster files; raster path defaults to the ENVI convention."""
    header_path = Path(header_path)
    try:
        header = parse_envi_header(header_path.read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read header {header_path}: {exc}") from exc

    if raster_path is None:
        raster_path = _default_raster_path(header_path)
    try:
        payload = Path(raster_path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read raster {raster_path}: {exc}") from exc
    return load_cube(header, payload)


def _default_raster_path(header_path: Path) -> Path:
    bare = header_path.with_suffix("")
    if bare.exists():
        return bare
    return header_path.with_suffix(".img")


def write_gray_pgm(field: ScalarField, vmin: float, vmax: float, path: Path) -> None:
    """Write a binary PGM (P5, maxval 255) quick-look of the field.

    Values map as round(255 * clamp((v - vmin) / (vmax - vmin), 0, 1)) with
    halves rounding up, rows written top to bottom.
    """
    if not vmax > vmin:
        raise ValueError("write_gray_pgm requires vmax > vmin")
    scaled = np.clip((field.values - vmin) / (vmax - vmin), 0.0, 1.0)
    pixels = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{field.width} {field.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_float_raster(field: ScalarField, path: Path) -> None:
    """Write raw little-endian float32, row-major, plus a text sidecar.

    The sidecar (``<path>.hdr``) records width and height so the raster
    round-trips without external context.
    """
    path = Path(path)
    payload = field.values.astype("<f4").tobytes()
    sidecar = f"width = {field.width}\nheight = {field.height}\n"
    try:
        path.write_bytes(payload)
        _sidecar_path(path).write_text(sidecar)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_float_raster(path: Path) -> ScalarField:
    """Read a raster written by :func:`write_float_raster`."""
    path = Path(path)
    try:
        sidecar = _sidecar_path(path).read_text()
        payload = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    entries = _collect_entries(sidecar)
    try:
        width = int(entries["width"])
        height = int(entries["height"])
    except (KeyError, ValueError):
        raise MissingField(f"sidecar for {path} lacks width/height") from None
    if width < 0 or height < 0:
        raise UnsupportedValue("sidecar dimensions must be non-negative")

    expected = 4 * width * height
    if len(payload) != expected:
        raise SizeMismatch(f"{path} holds {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(height, width)
    return ScalarField(values)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".hdr")


def _collect_entries(text: str) -> dict[str, str]:
    """Gather key = value entries, joining brace lists that span lines."""
    entries: dict[str, str] = {}
    pending_key: str | None = None
    pending_parts: list[str] = []

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.upper() == "ENVI":
            continue
        if pending_key is not None:
            pending_parts.append(line)
            if "}" in line:
                entries[pending_key] = " ".join(pending_parts)
                pending_key = None
                pending_parts = []
            continue
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{") and "}" not in value:
            pending_key = key
            pending_parts = [value]
            continue
        entries[key] = value
    return entries


def _parse_positive_int(entries: dict[str, str], key: str) -> int:
    text = entries[key].strip()
    try:
        value = int(text)
    except ValueError:
        raise UnsupportedValue(f"'{key}' value '{text}' is not an integer") from None
    if value <= 0:
        raise UnsupportedValue(f"'{key}' must be positive, got {value}")
    return value


def _parse_wavelengths(raw: str, bands: int) -> tuple[float, ...]:
    inner = raw.strip().lstrip("{").rstrip("}")
    tokens = [tok for tok in inner.replace(",", " ").split() if tok]
    try:
        values = tuple(float(tok) for tok in tokens)
    except ValueError:
        raise UnsupportedValue("wavelength list contains a non-numeric entry") from None
    if len(values) != bands:
        raise UnsupportedValue(
            f"wavelength list has {len(values)} entries for {bands} bands"
        )
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UnsupportedValue("wavelengths must be strictly increasing")
    return values
