"""Track data model: occupancy grid, distance field, centerline, path parameterization.

File formats:
  * occupancy raster: portable graymap (P2 or P5, maxval <= 255) where gray
    values <= occupied_thresh are obstacles, plus a key=value sidecar with
    resolution / origin_x / origin_y / origin_yaw / occupied_thresh and
    optional width/height for cross-checking.
  * centerline CSV with header ``x_m,y_m,w_left_m,w_right_m`` (closed loop,
    closing point implicit).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, GridParseError, TrackFormatError
from .util import wrap_to_pi

# thresholds of the track-characteristic statistics (rad/m)
STRAIGHT_KAPPA = 0.1
CORNER_KAPPA = 0.6
# moving-average window applied to curvature before thresholding
STATS_SMOOTH_WINDOW = 5


@dataclass(frozen=True)
class OccupancyGrid:
    """Row-major boolean raster; cell (0, 0) sits at ``origin`` in the world."""

    resolution: float
    origin: tuple
    cells: np.ndarray  # (height, width) bool, True = occupied

    def __post_init__(self):
        if not self.resolution > 0:
            raise ConfigError("grid resolution must be > 0")
        if self.cells.ndim != 2:
            raise ConfigError("grid cells must be 2-D")
        if not (~self.cells).any():
            raise ConfigError("grid has no free space")

    @property
    def height(self):
        return self.cells.shape[0]

    @property
    def width(self):
        return self.cells.shape[1]

    def world_to_cell(self, x, y):
        """(row, col) of the cell containing a world point; None outside."""
        ox, oy, oyaw = self.origin
        c, s = math.cos(oyaw), math.sin(oyaw)
        dx, dy = x - ox, y - oy
        xg = c * dx + s * dy
        yg = -s * dx + c * dy
        col = math.floor(xg / self.resolution)
        row = math.floor(yg / self.resolution)
        if 0 <= row < self.height and 0 <= col < self.width:
            return row, col
        return None

    def cell_center(self, row, col):
        """World coordinates of a cell center."""
        ox, oy, oyaw = self.origin
        xg = (col + 0.5) * self.resolution
        yg = (row + 0.5) * self.resolution
        c, s = math.cos(oyaw), math.sin(oyaw)
        return ox + c * xg - s * yg, oy + s * xg + c * yg

    def is_occupied(self, x, y):
        """Occupancy at a world point; anything outside the raster counts occupied."""
        cell = self.world_to_cell(x, y)
        if cell is None:
            return True
        return bool(self.cells[cell])

    @property
    def free_count(self):
        return int((~self.cells).sum())


@dataclass(frozen=True)
class DistanceField:
    """Per-cell Euclidean distance (m) to the nearest occupied cell."""

    resolution: float
    origin: tuple
    values: np.ndarray  # (height, width) float64 meters

    @classmethod
    def from_grid(cls, grid, backend=None):
        sq = kernels.squared_edt(grid.cells, backend=backend)
        values = np.sqrt(sq.astype(np.float64)) * grid.resolution
        return cls(grid.resolution, grid.origin, values)

    def value_at(self, x, y):
        """Nearest-cell field value at a world point; 0 outside the raster."""
        ox, oy, oyaw = self.origin
        c, s = math.cos(oyaw), math.sin(oyaw)
        dx, dy = x - ox, y - oy
        xg = c * dx + s * dy
        yg = -s * dx + c * dy
        col = math.floor(xg / self.resolution)
        row = math.floor(yg / self.resolution)
        if 0 <= row < self.values.shape[0] and 0 <= col < self.values.shape[1]:
            return float(self.values[row, col])
        return 0.0

    def values_at(self, xs, ys):
        """Vectorised nearest-cell lookup; 0 outside the raster."""
        ox, oy, oyaw = self.origin
        c, s = math.cos(oyaw), math.sin(oyaw)
        dx = np.asarray(xs, dtype=np.float64) - ox
        dy = np.asarray(ys, dtype=np.float64) - oy
        xg = c * dx + s * dy
        yg = -s * dx + c * dy
        col = np.floor(xg / self.resolution).astype(np.int64)
        row = np.floor(yg / self.resolution).astype(np.int64)
        h, w = self.values.shape
        inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
        out = np.zeros(dx.shape, dtype=np.float64)
        out[inside] = self.values[row[inside], col[inside]]
        return out


# ---------------------------------------------------------------------------
# portable graymap I/O
# ---------------------------------------------------------------------------

def _pgm_tokens(data):
    """Yield (token, byte_offset) for PGM headers, skipping comments."""
    i = 0
    n = len(data)
    while i < n:
        ch = data[i:i + 1]
        if ch in b" \t\r\n":
            i += 1
        elif ch == b"#":
            while i < n and data[i:i + 1] != b"\n":
                i += 1
        else:
            start = i
            while i < n and data[i:i + 1] not in b" \t\r\n":
                i += 1
            yield data[start:i], start, i
            # binary payload starts exactly one whitespace after maxval;
            # the caller stops iterating before that point for P5


def read_pgm(path):
    """Parse a P2/P5 graymap; returns a (height, width) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    tok = _pgm_tokens(data)

    def next_token(what):
        try:
            return next(tok)
        except StopIteration:
            raise GridParseError(f"truncated graymap, missing {what}", len(data)) from None

    magic, off, _ = next_token("magic")
    if magic not in (b"P2", b"P5"):
        raise GridParseError(f"bad magic {magic!r}, expected P2 or P5", off)
    dims = []
    for what in ("width", "height", "maxval"):
        raw, off, end = next_token(what)
        try:
            dims.append(int(raw))
        except ValueError:
            raise GridParseError(f"non-integer {what} {raw!r}", off) from None
    w, h, maxval = dims
    if w <= 0 or h <= 0:
        raise GridParseError("non-positive dimensions", off)
    if not 0 < maxval <= 255:
        raise GridParseError(f"unsupported maxval {maxval}", off)

    if magic == b"P5":
        payload_start = end + 1  # single whitespace byte after maxval
        payload = data[payload_start:payload_start + w * h]
        if len(payload) < w * h:
            raise GridParseError("truncated P5 payload", len(data))
        img = np.frombuffer(payload, dtype=np.uint8, count=w * h)
    else:
        vals = np.empty(w * h, dtype=np.uint8)
        for k in range(w * h):
            raw, off, end = next_token(f"pixel {k}")
            try:
                v = int(raw)
            except ValueError:
                raise GridParseError(f"non-integer pixel {raw!r}", off) from None
            if not 0 <= v <= maxval:
                raise GridParseError(f"pixel value {v} out of range", off)
            vals[k] = v
        img = vals
    return img.reshape(h, w)


def write_pgm(path, img):
    """Write a uint8 image as binary P5."""
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def _parse_kv(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def load_grid(image_path, metadata_path):
    """Load an occupancy grid from a graymap + metadata sidecar."""
    img = read_pgm(image_path)
    meta = _parse_kv(metadata_path)
    try:
        resolution = float(meta["resolution"])
    except KeyError:
        raise ConfigError(f"{metadata_path}: missing resolution") from None
    except ValueError:
        raise ConfigError(f"{metadata_path}: bad resolution {meta['resolution']!r}") from None
    origin = (
        float(meta.get("origin_x", 0.0)),
        float(meta.get("origin_y", 0.0)),
        float(meta.get("origin_yaw", 0.0)),
    )
    thresh = float(meta.get("occupied_thresh", 127))
    for key, actual in (("width", img.shape[1]), ("height", img.shape[0])):
        if key in meta and int(meta[key]) != actual:
            raise ConfigError(
                f"{metadata_path}: {key}={meta[key]} disagrees with raster {actual}"
            )
    # raster rows run top-down; grid rows run with +y, so flip
    cells = np.flipud(img) <= thresh
    return OccupancyGrid(resolution=resolution, origin=origin, cells=cells)


def save_grid(grid, image_path, metadata_path):
    """Write a grid back out in the load_grid formats."""
    img = np.where(np.flipud(grid.cells), 0, 255).astype(np.uint8)
    write_pgm(image_path, img)
    ox, oy, oyaw = grid.origin
    with open(metadata_path, "w") as fh:
        fh.write(f"resolution={grid.resolution!r}\n")
        fh.write(f"origin_x={ox!r}\norigin_y={oy!r}\norigin_yaw={oyaw!r}\n")
        fh.write("occupied_thresh=127\n")
        fh.write(f"width={grid.width}\nheight={grid.height}\n")


# ---------------------------------------------------------------------------
# centerline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CenterlineTrack:
    """Closed centerline with per-point side widths and arc lengths."""

    points: np.ndarray   # (N, 2)
    w_left: np.ndarray   # (N,)
    w_right: np.ndarray  # (N,)
    s: np.ndarray = field(init=False)
    length: float = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise TrackFormatError("too few points: a closed track needs >= 4")
        seg = np.diff(np.vstack([pts, pts[:1]]), axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if (seg_len < 1e-9).any():
            raise TrackFormatError("consecutive centerline points coincide")
        if (np.asarray(self.w_left) <= 0).any() or (np.asarray(self.w_right) <= 0).any():
            raise TrackFormatError("track widths must be positive")
        if _polyline_self_intersects(pts):
            raise TrackFormatError("centerline loop is open or self-crossing")
        s = np.concatenate([[0.0], np.cumsum(seg_len[:-1])])
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "w_left", np.asarray(self.w_left, dtype=np.float64))
        object.__setattr__(self, "w_right", np.asarray(self.w_right, dtype=np.float64))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "length", float(seg_len.sum()))

    @property
    def n_points(self):
        return self.points.shape[0]


def _polyline_self_intersects(pts):
    """Proper-intersection test over all non-adjacent closed-loop segments."""
    n = pts.shape[0]
    a = pts
    b = np.roll(pts, -1, axis=0)

    def cross(v, w):
        return v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]

    eps = 1e-12
    for i in range(n - 2):
        # the closing segment (n-1 -> 0) is adjacent to segment 0
        j_hi = n - 1 if i == 0 else n
        j = np.arange(i + 2, j_hi)
        if j.size == 0:
            continue
        p, r = a[i], b[i] - a[i]
        q, u = a[j], b[j] - a[j]
        denom = r[0] * u[:, 1] - r[1] * u[:, 0]
        qp = q - p[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross(qp, u) / denom
            w = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / denom
        hits = (np.abs(denom) > eps) & (t > eps) & (t < 1 - eps) & (w > eps) & (w < 1 - eps)
        if hits.any():
            return True
    return False


CENTERLINE_HEADER = ["x_m", "y_m", "w_left_m", "w_right_m"]


def load_centerline(csv_path):
    """Load a closed centerline from the documented CSV schema."""
    with open(csv_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise TrackFormatError(f"{csv_path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != CENTERLINE_HEADER:
        raise TrackFormatError(
            f"{csv_path}: bad header {header}, expected {CENTERLINE_HEADER}"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != 4:
            raise TrackFormatError(f"{csv_path}:{lineno}: expected 4 fields")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise TrackFormatError(f"{csv_path}:{lineno}: non-numeric field") from None
    if len(rows) < 4:
        raise TrackFormatError(f"{csv_path}: too few points ({len(rows)}), need >= 4")
    arr = np.array(rows)
    pts = arr[:, :2]
    if np.hypot(*(pts[-1] - pts[0])) < 1e-9:
        arr = arr[:-1]  # drop an explicit closing point
        pts = arr[:, :2]
        if len(arr) < 4:
            raise TrackFormatError(f"{csv_path}: too few points after closing-point removal")
    return CenterlineTrack(points=pts, w_left=arr[:, 2], w_right=arr[:, 3])


def save_centerline(track, csv_path):
    with open(csv_path, "w") as fh:
        fh.write(",".join(CENTERLINE_HEADER) + "\n")
        for (x, y), wl, wr in zip(track.points, track.w_left, track.w_right):
            fh.write(f"{x:.12g},{y:.12g},{wl:.12g},{wr:.12g}\n")


# ---------------------------------------------------------------------------
# arc-length parameterization
# ---------------------------------------------------------------------------

class PathParameterization:
    """Piecewise-linear X(s), Y(s) with continuous heading and curvature lookups.

    Headings come from central differences of the vertices, unwrapped around
    the loop; curvature is the central finite difference of heading over arc
    length. All queries reduce s modulo the track length.
    """

    def __init__(self, track):
        self.track = track
        pts = track.points
        self.length = track.length

        nxt = np.roll(pts, -1, axis=0)
        seg = nxt - pts
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
        self.s_vertex = track.s

        # heading knots live at segment midpoints, unwrapped around the loop
        dpsi = wrap_to_pi(np.diff(self.seg_heading, append=self.seg_heading[:1]))
        self.psi_unwrapped = self.seg_heading[0] + np.concatenate(
            [[0.0], np.cumsum(dpsi[:-1])]
        )
        self.winding = float(np.sum(dpsi))  # +-2*pi for a simple loop
        self._s_mid = self.s_vertex + 0.5 * self.seg_len

        # curvature at vertex i: heading change across the vertex over the
        # half-segment arc on either side
        ds_central = 0.5 * (self.seg_len + np.roll(self.seg_len, 1))
        dpsi_vertex = wrap_to_pi(self.seg_heading - np.roll(self.seg_heading, 1))
        self.kappa_vertex = dpsi_vertex / ds_central

        # arrays extended across the wrap for interpolation
        self._s_ext = np.concatenate([self.s_vertex, [self.length]])
        self._x_ext = np.concatenate([pts[:, 0], pts[:1, 0]])
        self._y_ext = np.concatenate([pts[:, 1], pts[:1, 1]])
        self._psi_knots_s = np.concatenate(
            [[self._s_mid[-1] - self.length], self._s_mid, [self._s_mid[0] + self.length]]
        )
        self._psi_knots = np.concatenate(
            [[self.psi_unwrapped[-1] - self.winding], self.psi_unwrapped,
             [self.psi_unwrapped[0] + self.winding]]
        )
        self._kappa_ext = np.concatenate([self.kappa_vertex, self.kappa_vertex[:1]])
        self._wl_ext = np.concatenate([track.w_left, track.w_left[:1]])
        self._wr_ext = np.concatenate([track.w_right, track.w_right[:1]])

    def _wrap_s(self, s):
        return np.mod(s, self.length)

    def xy_at(self, s):
        sw = self._wrap_s(np.asarray(s, dtype=np.float64))
        x = np.interp(sw, self._s_ext, self._x_ext)
        y = np.interp(sw, self._s_ext, self._y_ext)
        return np.stack(np.broadcast_arrays(x, y), axis=-1)

    def phi_at(self, s):
        sw = self._wrap_s(np.asarray(s, dtype=np.float64))
        phi = np.interp(sw, self._psi_knots_s, self._psi_knots)
        return wrap_to_pi(phi)

    def kappa_at(self, s):
        sw = self._wrap_s(np.asarray(s, dtype=np.float64))
        out = np.interp(sw, self._s_ext, self._kappa_ext)
        return float(out) if np.ndim(s) == 0 else out

    def widths_at(self, s):
        sw = self._wrap_s(np.asarray(s, dtype=np.float64))
        wl = np.interp(sw, self._s_ext, self._wl_ext)
        wr = np.interp(sw, self._s_ext, self._wr_ext)
        return wl, wr

    def segment_index(self, s):
        sw = self._wrap_s(s)
        return min(int(np.searchsorted(self._s_ext, sw, side="right")) - 1,
                   len(self.seg_len) - 1)

    def tangent_at(self, s):
        """Unit tangent of the underlying piecewise-linear path."""
        k = self.segment_index(s)
        h = self.seg_heading[k]
        return math.cos(h), math.sin(h)

    def dphi_ds_at(self, s):
        """Slope of the interpolated heading at s (piecewise constant)."""
        sw = self._wrap_s(s)
        k = int(np.searchsorted(self._psi_knots_s, sw, side="right")) - 1
        k = max(0, min(k, len(self._psi_knots_s) - 2))
        s0, s1 = self._psi_knots_s[k], self._psi_knots_s[k + 1]
        return (self._psi_knots[k + 1] - self._psi_knots[k]) / (s1 - s0)

    def project(self, x, y):
        """Arc length and distance of the closest centerline point."""
        pts = self.track.points
        a = pts
        b = np.roll(pts, -1, axis=0)
        ab = b - a
        p = np.array([x, y])
        ap = p[None, :] - a
        denom = (ab * ab).sum(axis=1)
        t = np.clip((ap * ab).sum(axis=1) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = ((closest - p[None, :]) ** 2).sum(axis=1)
        k = int(np.argmin(d2))
        s = self.s_vertex[k] + t[k] * self.seg_len[k]
        return float(np.mod(s, self.length)), float(math.sqrt(d2[k]))


def parameterize(track):
    """Build the arc-length parameterization of a centerline track."""
    return PathParameterization(track)


# ---------------------------------------------------------------------------
# track statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackStats:
    length: float
    straight_pct: float
    corner_count: int


def _circular_moving_average(values, window):
    pad = window // 2
    ext = np.concatenate([values[-pad:], values, values[:pad]])
    kernel = np.ones(window) / window
    return np.convolve(ext, kernel, mode="valid")


def track_stats(param):
    """Length, straight percentage, and corner count of a parameterized track."""
    kappa = np.abs(_circular_moving_average(param.kappa_vertex, STATS_SMOOTH_WINDOW))
    ds = 0.5 * (param.seg_len + np.roll(param.seg_len, 1))
    straight = float(ds[kappa < STRAIGHT_KAPPA].sum() / param.length * 100.0)

    corner = kappa > CORNER_KAPPA
    if corner.all():
        count = 1
    else:
        # rotate so the scan starts outside a corner, then count rising edges
        start = int(np.argmin(corner))
        rolled = np.roll(corner, -start)
        count = int((rolled & ~np.roll(rolled, 1)).sum())
    return TrackStats(length=param.length, straight_pct=straight, corner_count=count)


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def grid_from_centerline(track, resolution=0.05, pad=0.6):
    """Rasterize a centerline corridor: cells farther than the local width
    from the centerline become occupied."""
    pts = track.points
    wmax = float(max(track.w_left.max(), track.w_right.max()))
    lo = pts.min(axis=0) - (wmax + pad)
    hi = pts.max(axis=0) + (wmax + pad)
    origin = (float(lo[0]), float(lo[1]), 0.0)
    width = int(math.ceil((hi[0] - lo[0]) / resolution))
    height = int(math.ceil((hi[1] - lo[1]) / resolution))
    occ = np.ones((height, width), dtype=bool)

    a_all = pts
    b_all = np.roll(pts, -1, axis=0)
    wl_a, wl_b = track.w_left, np.roll(track.w_left, -1)
    wr_a, wr_b = track.w_right, np.roll(track.w_right, -1)

    for k in range(pts.shape[0]):
        a, b = a_all[k], b_all[k]
        w_here = max(wl_a[k], wl_b[k], wr_a[k], wr_b[k])
        blo = np.minimum(a, b) - (w_here + resolution)
        bhi = np.maximum(a, b) + (w_here + resolution)
        c0 = max(0, int((blo[0] - lo[0]) / resolution))
        c1 = min(width, int(math.ceil((bhi[0] - lo[0]) / resolution)))
        r0 = max(0, int((blo[1] - lo[1]) / resolution))
        r1 = min(height, int(math.ceil((bhi[1] - lo[1]) / resolution)))
        if c0 >= c1 or r0 >= r1:
            continue
        cx = lo[0] + (np.arange(c0, c1) + 0.5) * resolution
        cy = lo[1] + (np.arange(r0, r1) + 0.5) * resolution
        gx, gy = np.meshgrid(cx, cy)
        ab = b - a
        denom = float(ab @ ab)
        apx, apy = gx - a[0], gy - a[1]
        t = np.clip((apx * ab[0] + apy * ab[1]) / denom, 0.0, 1.0)
        qx = a[0] + t * ab[0]
        qy = a[1] + t * ab[1]
        dist = np.hypot(gx - qx, gy - qy)
        left = (ab[0] * apy - ab[1] * apx) > 0.0
        w_loc = np.where(
            left,
            wl_a[k] + t * (wl_b[k] - wl_a[k]),
            wr_a[k] + t * (wr_b[k] - wr_a[k]),
        )
        occ[r0:r1, c0:c1] &= ~(dist <= w_loc)

    return OccupancyGrid(resolution=resolution, origin=origin, cells=occ)


def distance_field(grid, backend=None):
    """Exact Euclidean distance transform of an occupancy grid (meters)."""
    return DistanceField.from_grid(grid, backend=backend)
