"""Deterministic synthetic data with exact ground truth.

Category priors are sampled from parametric surfaces; instances deform the
prior by a known field; observations pose, crop, subsample, and optionally
noise the instance, keeping the canonical coordinate of every observed
point. Everything is a pure function of (config, seeds).

Rotationally symmetric categories are sampled on rings of 12 points about
the vertical axis (leftovers go on the axis itself), so the prior maps
onto itself under 30-degree yaw rotations.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ChecksumMismatch,
    FormatError,
    TooFewVisiblePoints,
    UnknownCategory,
)
from .geometry import ColoredPointCloud, PointCloud, SimilarityTransform

CATEGORY_NAMES = ("bottle", "bowl", "camera", "can", "laptop", "mug")
SYMMETRIC_CATEGORIES = frozenset({"bottle", "bowl", "can"})

_RING = 12  # ring size for symmetric surfaces; 360/12 deg closure


@dataclass(frozen=True)
class CategorySpec:
    """A category name plus the prior resolution N_c."""

    name: str
    n_points: int = 256

    def __post_init__(self):
        if self.name not in CATEGORY_NAMES:
            raise UnknownCategory(f"unknown category {self.name!r}")
        if self.n_points < 32:
            raise ValueError("priors need at least 32 points")

    @property
    def symmetric(self) -> bool:
        return self.name in SYMMETRIC_CATEGORIES


@dataclass(frozen=True)
class ShapeVariation:
    """Instance-level deformation magnitudes."""

    axis_scale_range: tuple[float, float] = (0.7, 1.3)
    field_amplitude: float = 0.08


@dataclass(frozen=True)
class CategoryPrior:
    spec: CategorySpec
    cloud: PointCloud
    colors: np.ndarray
    handle_mask: np.ndarray  # True on mug-handle points, all False otherwise


@dataclass(frozen=True)
class InstanceModel:
    """A deformed prior in canonical space, unit bounding-box diagonal."""

    spec: CategorySpec
    points: np.ndarray  # (N_c, 3)
    gt_deformation: np.ndarray  # points - prior points
    colors: np.ndarray
    handle_mask: np.ndarray
    seed: int


@dataclass(frozen=True)
class PoseParams:
    scale_range: tuple[float, float] = (0.08, 0.4)
    yaw_only_fraction: float = 0.0
    translation_range: float = 0.5


@dataclass(frozen=True)
class Observation:
    cloud: ColoredPointCloud  # camera frame, meters
    gt_pose: SimilarityTransform
    gt_nocs: np.ndarray  # (N_p, 3) canonical coordinate per observed point
    category: str
    handle_visible: bool
    rng_seed: int
    instance: InstanceModel


# ------------------------------------------------------------ surface shapes


def _ring_points(y: float, radius: float, offset: float) -> np.ndarray:
    ang = offset + np.arange(_RING) * (2.0 * np.pi / _RING)
    return np.stack(
        [radius * np.cos(ang), np.full(_RING, y), radius * np.sin(ang)], axis=1
    )


def _ring_surface(n: int, profile) -> np.ndarray:
    """Rings along a surface-of-revolution profile t -> (y, radius).

    Leftover points (n mod ring size) sit on the symmetry axis, which is
    invariant under any yaw.
    """
    n_rings, extra = divmod(n, _RING)
    parts = []
    for i in range(n_rings):
        t = (i + 0.5) / n_rings
        y, radius = profile(t)
        parts.append(_ring_points(y, radius, offset=2.39996 * i))
    if extra:
        ys = np.linspace(-0.2, 0.2, extra)
        parts.append(np.stack([np.zeros(extra), ys, np.zeros(extra)], axis=1))
    return np.vstack(parts)


def _cylinder_profile(radius: float, height: float):
    side = height
    cap = radius  # radial sweep per cap
    total = side + 2.0 * cap

    def profile(t: float):
        u = t * total
        if u < cap:  # bottom cap, inside out
            return -height / 2.0, radius * (u / cap)
        if u < cap + side:  # wall
            return (u - cap) / side * height - height / 2.0, radius
        return height / 2.0, radius * (1.0 - (u - cap - side) / cap)

    return profile


def _bowl_profile(radius: float, thickness: float = 0.12):
    inner = radius * (1.0 - thickness)
    arc_out = np.pi / 2.0 * radius
    arc_in = np.pi / 2.0 * inner
    rim = radius - inner
    total = arc_out + rim + arc_in

    def profile(t: float):
        u = t * total
        if u < arc_out:  # outer shell, pole to rim
            ang = u / arc_out * (np.pi / 2.0)
            return -radius * np.cos(ang), radius * np.sin(ang)
        if u < arc_out + rim:  # flat rim at the opening
            return 0.0, radius - (u - arc_out)
        ang = (1.0 - (u - arc_out - rim) / arc_in) * (np.pi / 2.0)
        return -inner * np.cos(ang), inner * np.sin(ang)

    return profile


_PHI = (1.0 + 5.0**0.5) / 2.0


def _lattice(n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(n)
    return (i + 0.5) / n, (i * _PHI) % 1.0


def _box(n: int, ex: float, ey: float, ez: float) -> np.ndarray:
    half = np.array([ex, ey, ez]) / 2.0
    # (axis, sign) faces weighted by area
    faces = []
    areas = []
    for axis in range(3):
        u_axis, v_axis = [a for a in range(3) if a != axis]
        area = (half[u_axis] * 2.0) * (half[v_axis] * 2.0)
        for sign in (-1.0, 1.0):
            faces.append((axis, sign, u_axis, v_axis))
            areas.append(area)
    areas = np.asarray(areas)
    counts = np.floor(n * areas / areas.sum()).astype(int)
    while counts.sum() < n:
        counts[int(np.argmax(areas - counts / n))] += 1
    pts = []
    for (axis, sign, u_axis, v_axis), m in zip(faces, counts):
        if m == 0:
            continue
        t, u = _lattice(m)
        p = np.zeros((m, 3))
        p[:, axis] = sign * half[axis]
        p[:, u_axis] = (t - 0.5) * 2.0 * half[u_axis]
        p[:, v_axis] = (u - 0.5) * 2.0 * half[v_axis]
        pts.append(p)
    return np.vstack(pts)


def _mug(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cylindrical body plus a torus-arc handle; returns (points, handle mask)."""
    n_handle = max(_RING, int(round(n * 0.22)))
    n_body = n - n_handle
    body = _ring_surface(n_body, _cylinder_profile(radius=0.42, height=0.9))
    # handle: tube around a circular arc in the xy-plane, hanging off +x
    arc_r, tube_r = 0.26, 0.055
    t, u = _lattice(n_handle)
    phi = (t - 0.5) * 2.0 * 1.9  # arc parameter, about +-109 degrees
    psi = 2.0 * np.pi * u
    cx = 0.40
    ring_x = cx + arc_r * np.cos(phi)
    ring_y = arc_r * np.sin(phi)
    nx, ny = np.cos(phi), np.sin(phi)
    handle = np.stack(
        [
            ring_x + tube_r * np.cos(psi) * nx,
            ring_y + tube_r * np.cos(psi) * ny,
            tube_r * np.sin(psi),
        ],
        axis=1,
    )
    pts = np.vstack([body, handle])
    mask = np.zeros(len(pts), dtype=bool)
    mask[len(body):] = True
    return pts, mask


def _normalize_unit_diagonal(points: np.ndarray) -> np.ndarray:
    """Center the bounding box at the origin, scale its diagonal to 1."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    centered = points - (lo + hi) / 2.0
    diag = float(np.linalg.norm(hi - lo))
    return centered / diag


_COLOR_FREQ = np.array(
    [[2.1, 0.4, 0.9], [0.3, 2.3, 1.1], [1.2, 0.8, 2.7]]
)


def _palette(points: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Smooth positional color coding; phase differentiates instances."""
    raw = points @ _COLOR_FREQ.T * np.pi + phase
    return 0.5 + 0.5 * np.sin(raw)


_CATEGORY_PHASE = {name: i * 0.7 for i, name in enumerate(CATEGORY_NAMES)}


@lru_cache(maxsize=None)
def _prior_points(name: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    if name == "bottle":
        pts = _ring_surface(n, _cylinder_profile(radius=0.30, height=2.2))
        mask = np.zeros(n, dtype=bool)
    elif name == "can":
        pts = _ring_surface(n, _cylinder_profile(radius=0.55, height=1.3))
        mask = np.zeros(n, dtype=bool)
    elif name == "bowl":
        pts = _ring_surface(n, _bowl_profile(radius=1.0))
        mask = np.zeros(n, dtype=bool)
    elif name == "laptop":
        pts = _box(n, 1.4, 0.5, 1.0)
        mask = np.zeros(n, dtype=bool)
    elif name == "camera":
        pts = _box(n, 1.0, 0.65, 0.55)
        mask = np.zeros(n, dtype=bool)
    elif name == "mug":
        pts, mask = _mug(n)
    else:  # pragma: no cover - CategorySpec already validates
        raise UnknownCategory(name)
    return _normalize_unit_diagonal(pts), mask


def make_prior(spec: CategorySpec) -> CategoryPrior:
    """Deterministic canonical prior: unit diagonal, symmetry axis = +y."""
    pts, mask = _prior_points(spec.name, spec.n_points)
    phase = np.full(3, _CATEGORY_PHASE[spec.name])
    return CategoryPrior(
        spec=spec,
        cloud=PointCloud(pts.copy()),
        colors=_palette(pts, phase),
        handle_mask=mask.copy(),
    )


# ------------------------------------------------------------------ instances


def sample_instance(prior: CategoryPrior, variation: ShapeVariation, seed) -> InstanceModel:
    """Anisotropic axis scaling plus a smooth low-frequency field, renormalized.

    Symmetric categories keep their rotational symmetry: the x/z scales are
    tied and the field depends on height only.
    """
    rng = np.random.default_rng(seed)
    lo, hi = variation.axis_scale_range
    scales = rng.uniform(lo, hi, size=3)
    spec = prior.spec
    if spec.symmetric:
        scales[2] = scales[0]
    # only relative anisotropy survives the unit-diagonal renormalization,
    # so cap the common factor at 1 to stay inside the working volume
    scales = scales / scales.max()
    pts = prior.cloud.points * scales

    amp = variation.field_amplitude
    if amp > 0.0:
        if spec.symmetric:
            freq = rng.uniform(0.8, 1.6)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            radial = 1.0 + amp * np.sin(2.0 * np.pi * freq * pts[:, 1] + phase)
            pts = pts * np.stack([radial, np.ones(len(pts)), radial], axis=1)
        else:
            k = rng.uniform(0.8, 1.6, size=(3, 3))
            phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
            pts = pts + amp * np.sin(2.0 * np.pi * (pts @ k.T) + phase)

    if np.abs(pts).max() > 0.6:
        raise ValueError("variation pushed the model outside [-0.6, 0.6]^3")
    pts = _normalize_unit_diagonal(pts)

    # round-trip through the stored field so points == prior + deformation
    # holds bitwise, not just to rounding
    deformation = pts - prior.cloud.points
    pts = prior.cloud.points + deformation

    hue = rng.uniform(0.0, 2.0 * np.pi, size=3)
    phase = np.full(3, _CATEGORY_PHASE[spec.name]) + hue
    return InstanceModel(
        spec=spec,
        points=pts,
        gt_deformation=deformation,
        colors=_palette(pts, phase),
        handle_mask=prior.handle_mask.copy(),
        seed=int(seed) if isinstance(seed, (int, np.integer)) else -1,
    )


# --------------------------------------------------------------- observations


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _yaw_rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def render_observation(
    inst: InstanceModel,
    pose: PoseParams,
    noise_sigma: float,
    crop_fraction: float,
    n_points: int,
    seed,
) -> Observation:
    """Sample surface points, pose them, and optionally crop and noise.

    The canonical coordinates of the sampled points are kept as the exact
    per-point ground truth; at zero noise the stored cloud equals
    apply_transform(gt_pose, gt_nocs) bit for bit.
    """
    rng = np.random.default_rng(seed)
    n_c = len(inst.points)

    if crop_fraction > 0.0:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        proj = inst.points @ direction
        cutoff = np.quantile(proj, 1.0 - crop_fraction)
        keep = np.flatnonzero(proj <= cutoff)
    else:
        keep = np.arange(n_c)
    if len(keep) < n_points / 2:
        raise TooFewVisiblePoints(
            f"crop left {len(keep)} of {n_c} points for {n_points} samples"
        )

    idx = rng.choice(keep, size=n_points, replace=len(keep) < n_points)
    gt_nocs = inst.points[idx]
    colors = inst.colors[idx]

    scale = float(rng.uniform(*pose.scale_range))
    if rng.random() < pose.yaw_only_fraction:
        rotation = _yaw_rotation(rng.uniform(0.0, 2.0 * np.pi))
    else:
        rotation = _random_rotation(rng)
    translation = rng.uniform(-pose.translation_range, pose.translation_range, size=3)
    gt_pose = SimilarityTransform(scale, rotation, translation)

    pts = gt_pose.apply_points(gt_nocs)
    if noise_sigma > 0.0:
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)

    handle_visible = True
    if inst.spec.name == "mug":
        total = int(inst.handle_mask.sum())
        surviving = int(inst.handle_mask[keep].sum())
        handle_visible = surviving > 0.1 * total

    seed_int = int(seed) if isinstance(seed, (int, np.integer)) else -1
    return Observation(
        cloud=ColoredPointCloud(pts, colors),
        gt_pose=gt_pose,
        gt_nocs=gt_nocs,
        category=inst.spec.name,
        handle_visible=handle_visible,
        rng_seed=seed_int,
        instance=inst,
    )


# -------------------------------------------------------------------- dataset


@dataclass(frozen=True)
class DatasetConfig:
    """Full recipe for a dataset; generation is pure in (config, master seed)."""

    categories: tuple[str, ...] = CATEGORY_NAMES
    n_observations: int = 60
    n_instance_points: int = 256  # N_c
    n_observed_points: int = 256  # N_p
    axis_scale_range: tuple[float, float] = (0.7, 1.3)
    field_amplitude: float = 0.08
    scale_range: tuple[float, float] = (0.08, 0.4)
    yaw_only_fraction: float = 0.0
    translation_range: float = 0.5
    noise_sigma: float = 0.0
    crop_fraction: float = 0.3
    master_seed: int = 0

    def __post_init__(self):
        for c in self.categories:
            if c not in CATEGORY_NAMES:
                raise UnknownCategory(f"unknown category {c!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "axis_scale_range", tuple(self.axis_scale_range))
        object.__setattr__(self, "scale_range", tuple(self.scale_range))

    def variation(self) -> ShapeVariation:
        return ShapeVariation(self.axis_scale_range, self.field_amplitude)

    def pose_params(self) -> PoseParams:
        return PoseParams(
            self.scale_range, self.yaw_only_fraction, self.translation_range
        )


def _seeds_for_index(master_seed: int, index: int) -> tuple[int, int]:
    base = master_seed * 1_000_003 + 2 * index
    return base, base + 1  # (instance seed, observation seed)


def build_item(cfg: DatasetConfig, index: int) -> Observation:
    """Generate observation ``index``; items are independent and parallel-safe."""
    category = cfg.categories[index % len(cfg.categories)]
    spec = CategorySpec(category, cfg.n_instance_points)
    inst_seed, obs_seed = _seeds_for_index(cfg.master_seed, index)
    inst = sample_instance(make_prior(spec), cfg.variation(), inst_seed)
    return render_observation(
        inst, cfg.pose_params(), cfg.noise_sigma, cfg.crop_fraction,
        cfg.n_observed_points, obs_seed,
    )


def generate_dataset(cfg: DatasetConfig) -> list[Observation]:
    return [build_item(cfg, i) for i in range(cfg.n_observations)]


# ------------------------------------------------------------- NFD1 container

MAGIC = b"NFD1"
FORMAT_VERSION = 1


def _checksum(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:8]


def save_dataset(path, cfg: DatasetConfig, observations: list[Observation]) -> None:
    """Write config plus observations with a trailing payload checksum."""
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    blob = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<I", len(observations)))
    for obs in observations:
        n_p = len(obs.cloud)
        parts.append(struct.pack("<II", CATEGORY_NAMES.index(obs.category), n_p))
        for arr in (obs.cloud.points, obs.cloud.colors, obs.gt_nocs):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(obs.gt_pose.to_array(), dtype="<f8").tobytes())
        parts.append(struct.pack("<I", 1 if obs.handle_visible else 0))
        parts.append(struct.pack("<q", obs.rng_seed))
    payload = b"".join(parts)
    with open(path, "wb") as f:
        f.write(payload)
        f.write(_checksum(payload))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"truncated dataset: wanted {n} bytes at offset {self.pos}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64_array(self, count: int, shape) -> np.ndarray:
        return np.frombuffer(self.take(count * 8), dtype="<f8").reshape(shape).copy()


def load_dataset(path) -> tuple[DatasetConfig, list[Observation]]:
    """Read, verify the checksum, and regenerate each instance reference."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 8:
        raise FormatError("file too short to be a dataset container")
    payload, stored = blob[:-8], blob[-8:]
    if payload[: len(MAGIC)] != MAGIC:
        raise FormatError("not a dataset container (bad magic)")
    if _checksum(payload) != stored:
        raise ChecksumMismatch("dataset payload checksum mismatch")

    r = _Reader(payload)
    r.take(len(MAGIC))
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    cfg_raw = json.loads(r.take(r.u32()).decode("utf-8"))
    cfg = DatasetConfig(**cfg_raw)
    count = r.u32()

    observations = []
    for _ in range(count):
        cat_id = r.u32()
        if cat_id >= len(CATEGORY_NAMES):
            raise FormatError(f"bad category id {cat_id}")
        category = CATEGORY_NAMES[cat_id]
        n_p = r.u32()
        pts = r.f64_array(n_p * 3, (n_p, 3))
        colors = r.f64_array(n_p * 3, (n_p, 3))
        gt_nocs = r.f64_array(n_p * 3, (n_p, 3))
        pose = SimilarityTransform.from_array(r.f64_array(13, (13,)))
        flags = r.u32()
        obs_seed = r.i64()
        spec = CategorySpec(category, cfg.n_instance_points)
        inst = sample_instance(make_prior(spec), cfg.variation(), obs_seed - 1)
        observations.append(
            Observation(
                cloud=ColoredPointCloud(pts, colors),
                gt_pose=pose,
                gt_nocs=gt_nocs,
                category=category,
                handle_visible=bool(flags & 1),
                rng_seed=obs_seed,
                instance=inst,
            )
        )
    if r.pos != len(payload):
        raise FormatError(f"{len(payload) - r.pos} trailing bytes after observations")
    return cfg, observations
