"""Deterministic position-to-channel mapping and labeled dataset generation.

Channels come from an image-source multipath model: every reflector is an
infinite plane with a real reflection coefficient, images are built up to
second order, and each path contributes ``g / d * exp(-j 2 pi f d / c0)``
on every antenna and subcarrier. Channel vectors are stored antenna-major,
so entry ``n * S + s`` is antenna ``n`` on subcarrier ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

TASKS = ("positioning", "channel_mapping")


@dataclass(frozen=True)
class Reflector:
    """Plane ``normal . x = offset`` with a real reflection coefficient."""

    normal: tuple[float, float, float]
    offset: float
    coeff: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("reflector normal must be nonzero")
        if not -1.0 <= self.coeff <= 1.0:
            raise ValueError(f"reflection coefficient {self.coeff} outside [-1, 1]")
        object.__setattr__(self, "normal", tuple(float(v) for v in n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def mirror(self, p: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        return p - 2.0 * (p @ n - self.offset) * n


@dataclass(frozen=True)
class Scene:
    """Geometry and frequency plan of a synthetic deployment.

    ``room_extent`` is the axis-aligned box ``[0, x] x [0, y] x [0, z]`` that
    bounds antennas and users. ``user_box`` optionally narrows where users
    are sampled, as ``((xmin, ymin, zmin), (xmax, ymax, zmax))``.
    ``amplitude_scale`` multiplies every path gain; with no noise term in the
    spectral-efficiency objective it plays the role of the link SNR.
    """

    room_extent: tuple[float, float, float]
    antenna_positions: np.ndarray
    reflectors: tuple[Reflector, ...] = ()
    max_paths: int = 5
    carrier_uplink_hz: float = 2.4e9
    carrier_downlink_hz: float = 2.5e9
    subcarrier_spacing_hz: float = 1.25e6
    n_subcarriers: int = 16
    seed: int = 0
    reflection_order: int = 2
    amplitude_scale: float = 1.0
    user_box: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    _images: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        ext = np.asarray(self.room_extent, dtype=float)
        if ext.shape != (3,) or np.any(ext <= 0):
            raise ValueError("room_extent must be three positive lengths")
        ant = np.array(self.antenna_positions, dtype=float, ndmin=2)
        if ant.ndim != 2 or ant.shape[1] != 3 or ant.shape[0] < 1:
            raise ValueError("antenna_positions must be an (N, 3) array with N >= 1")
        if np.any(ant < 0) or np.any(ant > ext):
            raise ValueError("all antenna positions must lie inside room_extent")
        ant.flags.writeable = False
        object.__setattr__(self, "antenna_positions", ant)
        object.__setattr__(self, "room_extent", tuple(float(v) for v in ext))
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if not self.amplitude_scale > 0:
            raise ValueError("amplitude_scale must be positive")
        if self.max_paths < 1:
            raise ValueError("max_paths must be >= 1")
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.reflection_order not in (0, 1, 2):
            raise ValueError("reflection_order must be 0, 1 or 2")
        if self.user_box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.user_box)
            if np.any(lo > hi) or np.any(lo < 0) or np.any(hi > ext):
                raise ValueError("user_box must be an ordered box inside room_extent")
            object.__setattr__(self, "user_box", (tuple(lo), tuple(hi)))
        object.__setattr__(self, "_images", self._image_sequences())

    @property
    def n_antennas(self) -> int:
        return self.antenna_positions.shape[0]

    def subcarrier_freqs(self, carrier_hz: float) -> np.ndarray:
        s = np.arange(self.n_subcarriers, dtype=float)
        return carrier_hz + (s - (self.n_subcarriers - 1) / 2.0) * self.subcarrier_spacing_hz

    def sampling_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.user_box is None:
            return np.zeros(3), np.asarray(self.room_extent)
        return np.asarray(self.user_box[0]), np.asarray(self.user_box[1])

    def _image_sequences(self) -> tuple[tuple[int, ...], ...]:
        seqs: list[tuple[int, ...]] = [()]
        m = len(self.reflectors)
        if self.reflection_order >= 1:
            seqs += [(i,) for i in range(m)]
        if self.reflection_order >= 2:
            seqs += [(i, j) for i, j in product(range(m), repeat=2) if i != j]
        return tuple(seqs)

    def paths(self, pos) -> tuple[np.ndarray, np.ndarray]:
        """Image points and gains of the retained paths, strongest first.

        Paths are ranked by ``|g| / d`` measured from the antenna centroid;
        equal amplitudes keep enumeration order (LOS, first order, second
        order).
        """
        p = np.asarray(pos, dtype=float)
        images = np.empty((len(self._images), 3))
        gains = np.empty(len(self._images))
        for i, seq in enumerate(self._images):
            q = p.copy()
            g = 1.0
            for r in seq:
                q = self.reflectors[r].mirror(q)
                g *= self.reflectors[r].coeff
            images[i] = q
            gains[i] = g
        centroid = self.antenna_positions.mean(axis=0)
        amp = np.abs(gains) / np.linalg.norm(images - centroid, axis=1)
        order = np.argsort(-amp, kind="stable")[: self.max_paths]
        return images[order], gains[order]


def _planar_array(shape, spacing, center, plane="xy") -> np.ndarray:
    a = (np.arange(shape[0]) - (shape[0] - 1) / 2.0) * spacing
    b = (np.arange(shape[1]) - (shape[1] - 1) / 2.0) * spacing
    cx, cy, cz = center
    if plane == "xy":
        return np.array([(cx + u, cy + v, cz) for u in a for v in b])
    if plane == "xz":
        return np.array([(cx + u, cy, cz + v) for u in a for v in b])
    raise ValueError(f"unknown array plane {plane!r}")


def indoor_room(
    size: tuple[float, float, float] = (10.0, 10.0, 3.0),
    antenna_grid: tuple[int, int] = (4, 4),
    antenna_spacing: float | None = None,
    wall_coeff: float = -0.6,
    floor_coeff: float = -0.4,
    user_height: tuple[float, float] = (1.0, 1.0),
    margin: float = 0.25,
    **kwargs,
) -> Scene:
    """Rectangular room with a uniform planar antenna grid on the ceiling.

    The grid is centred on the ceiling with half-wavelength spacing at the
    uplink carrier unless ``antenna_spacing`` (meters) is given; a spacing
    of ``size[0] / antenna_grid[0]`` spreads it over the whole ceiling.
    """
    x, y, z = size
    up = kwargs.get("carrier_uplink_hz", Scene.carrier_uplink_hz)
    d = SPEED_OF_LIGHT / up / 2.0 if antenna_spacing is None else antenna_spacing
    ant = _planar_array(antenna_grid, d, (x / 2.0, y / 2.0, z))
    refl = (
        Reflector((1, 0, 0), 0.0, wall_coeff),
        Reflector((1, 0, 0), x, wall_coeff),
        Reflector((0, 1, 0), 0.0, wall_coeff),
        Reflector((0, 1, 0), y, wall_coeff),
        Reflector((0, 0, 1), 0.0, floor_coeff),
    )
    box = ((margin, margin, user_height[0]), (x - margin, y - margin, user_height[1]))
    return Scene(room_extent=(x, y, z), antenna_positions=ant, reflectors=refl, user_box=box, **kwargs)


def outdoor_area(
    size: tuple[float, float, float] = (400.0, 400.0, 40.0),
    n_scatterers: int = 6,
    array_shape: tuple[int, int] = (4, 4),
    array_center: tuple[float, float, float] | None = None,
    element_spacing: float | None = None,
    coeff_range: tuple[float, float] = (-0.8, -0.3),
    user_height: tuple[float, float] = (1.5, 1.5),
    carrier_hz: float = 1.27e9,
    seed: int = 0,
    **kwargs,
) -> Scene:
    """Large open area with a mast-mounted planar array and seeded scatterer planes.

    The array stands in a vertical plane on the ``y = 0`` edge of the area,
    looking into it.

    Scatterers are vertical planes (building faces) with random orientation,
    placed through random points of the area; the ground is an extra
    reflector. Up- and downlink share ``carrier_hz`` unless overridden.
    """
    x, y, z = size
    rng = np.random.default_rng([seed, 0x5CA7])
    if array_center is None:
        array_center = (x / 2.0, 0.0, z * 0.75)
    d = SPEED_OF_LIGHT / carrier_hz / 2.0 if element_spacing is None else element_spacing
    # array in the vertical x-z plane
    ant = _planar_array(array_shape, d, array_center, plane="xz")

    refl = [Reflector((0, 0, 1), 0.0, -0.5)]
    for _ in range(n_scatterers):
        theta = rng.uniform(0.0, np.pi)
        normal = (np.cos(theta), np.sin(theta), 0.0)
        anchor = rng.uniform((0.0, 0.0), (x, y))
        offset = anchor[0] * normal[0] + anchor[1] * normal[1]
        refl.append(Reflector(normal, offset, float(rng.uniform(*coeff_range))))
    box = ((0.0, 0.0, user_height[0]), (x, y, user_height[1]))
    kwargs.setdefault("carrier_uplink_hz", carrier_hz)
    kwargs.setdefault("carrier_downlink_hz", carrier_hz)
    return Scene(
        room_extent=(x, y, z), antenna_positions=ant, reflectors=tuple(refl),
        user_box=box, seed=seed, **kwargs,
    )


def synth_channel(scene: Scene, pos, carrier_hz: float) -> np.ndarray:
    """Channel vector of length N*S for a user at ``pos``."""
    p = np.asarray(pos, dtype=float)
    if p.shape != (3,):
        raise ValueError("position must be a 3-D point")
    if np.any(p < 0) or np.any(p > np.asarray(scene.room_extent)):
        raise ValueError(f"position {tuple(p)} outside scene bounds {scene.room_extent}")
    images, gains = scene.paths(p)
    # d[path, antenna]
    d = np.linalg.norm(images[:, None, :] - scene.antenna_positions[None, :, :], axis=2)
    f = scene.subcarrier_freqs(carrier_hz)
    phase = np.exp(-2j * np.pi * d[:, :, None] * f[None, None, :] / SPEED_OF_LIGHT)
    contrib = (scene.amplitude_scale * gains[:, None] / d)[:, :, None] * phase
    h = np.zeros(contrib.shape[1:], dtype=np.complex128)
    for c in contrib:
        h += c
    return h.reshape(-1)


def channel_matrix(ch: np.ndarray, n_antennas: int) -> np.ndarray:
    """View a stored channel vector as an (antennas, subcarriers) matrix."""
    ch = np.asarray(ch)
    if ch.size % n_antennas:
        raise ValueError(f"length {ch.size} not divisible by {n_antennas} antennas")
    return ch.reshape(n_antennas, -1)


def antenna_subset(ch, idx, n_subcarriers: int) -> np.ndarray:
    """Restrict a channel vector to the listed antennas, keeping their order."""
    ch = np.asarray(ch)
    idx = [int(i) for i in idx]
    if ch.size % n_subcarriers:
        raise ValueError(f"length {ch.size} not divisible by {n_subcarriers} subcarriers")
    n = ch.size // n_subcarriers
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate antenna indices in {idx}")
    bad = [i for i in idx if not 0 <= i < n]
    if bad:
        raise ValueError(f"antenna indices {bad} out of range [0, {n})")
    return ch.reshape(n, n_subcarriers)[idx].reshape(-1)


def stack_real(z) -> np.ndarray:
    """Complex vector -> ``[re, im]`` real vector of twice the length."""
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1)


def unstack_real(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    if 2 * half != x.shape[-1]:
        raise ValueError("real-stacked vector must have even length")
    return x[..., :half] + 1j * x[..., half:]


@dataclass
class LabeledDataset:
    """Paired channels and targets.

    ``inputs`` is an (L, input_dim) complex array, ``targets`` an (L, T) real
    array (complex targets real-stacked). ``split`` holds 0 for training and
    1 for validation samples.
    """

    inputs: np.ndarray
    targets: np.ndarray
    task: str
    n_antennas: int
    n_subcarriers: int
    antenna_subset: tuple[int, ...] | None = None
    split: np.ndarray | None = None
    positions: np.ndarray | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASKS}")
        self.inputs = np.asarray(self.inputs, dtype=np.complex128)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D (samples first)")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )
        if self.split is None:
            self.split = np.zeros(self.inputs.shape[0], dtype=np.uint8)
        self.split = np.asarray(self.split, dtype=np.uint8)
        if self.antenna_subset is not None:
            self.antenna_subset = tuple(int(i) for i in self.antenna_subset)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def target_dim(self) -> int:
        return self.targets.shape[1]

    def take(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return LabeledDataset(
            inputs=self.inputs[rows], targets=self.targets[rows], task=self.task,
            n_antennas=self.n_antennas, n_subcarriers=self.n_subcarriers,
            antenna_subset=self.antenna_subset, split=self.split[rows],
            positions=None if self.positions is None else self.positions[rows],
        )

    def with_inputs(self, inputs, n_subcarriers: int | None = None) -> "LabeledDataset":
        return LabeledDataset(
            inputs=inputs, targets=self.targets, task=self.task,
            n_antennas=self.n_antennas,
            n_subcarriers=self.n_subcarriers if n_subcarriers is None else n_subcarriers,
            antenna_subset=self.antenna_subset, split=self.split, positions=self.positions,
        )

    def equals(self, other: "LabeledDataset") -> bool:
        return (
            self.task == other.task
            and self.n_antennas == other.n_antennas
            and self.n_subcarriers == other.n_subcarriers
            and self.antenna_subset == other.antenna_subset
            and self.inputs.shape == other.inputs.shape
            and self.targets.shape == other.targets.shape
            and self.inputs.tobytes() == other.inputs.tobytes()
            and self.targets.tobytes() == other.targets.tobytes()
            and self.split.tobytes() == other.split.tobytes()
        )


def sample_positions(scene: Scene, L: int, stream: int = 0) -> np.ndarray:
    lo, hi = scene.sampling_box()
    rng = np.random.default_rng([scene.seed, stream, 1])
    return rng.uniform(lo, hi, size=(L, 3))


def generate_dataset(
    scene: Scene,
    L: int,
    task: str,
    noise_std: float = 0.0,
    subset_size: int | None = None,
    stream: int = 0,
) -> LabeledDataset:
    """Draw ``L`` users uniformly in the scene and label their channels.

    ``stream`` selects an independent random stream under the same scene
    seed, which is how train and test sets are kept disjoint. The antenna
    subset depends on the scene seed only, so every stream sees the same
    antennas. Per-sample noise uses counter-based seeds ``(seed, stream, i)``
    so the result does not depend on generation order.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    N, S = scene.n_antennas, scene.n_subcarriers
    subset = None
    if task == "channel_mapping" and subset_size is not None:
        if subset_size > N or subset_size < 1:
            raise ValueError(f"subset_size {subset_size} must lie in [1, {N}]")
        pick = np.random.default_rng([scene.seed, 2]).permutation(N)[:subset_size]
        subset = tuple(int(i) for i in pick)
    in_dim = (len(subset) if subset is not None else N) * S
    tgt_dim = 2 * N * S if task == "channel_mapping" else 3

    pos = sample_positions(scene, L, stream)
    inputs = np.empty((L, in_dim), dtype=np.complex128)
    targets = np.empty((L, tgt_dim))
    for i, p in enumerate(pos):
        up = synth_channel(scene, p, scene.carrier_uplink_hz)
        if subset is not None:
            up = antenna_subset(up, subset, S)
        if noise_std > 0:
            nrng = np.random.default_rng([scene.seed, stream, 3, i])
            w = nrng.standard_normal((2, in_dim)) * (noise_std / np.sqrt(2.0))
            up = up + (w[0] + 1j * w[1])
        inputs[i] = up
        if task == "channel_mapping":
            targets[i] = stack_real(synth_channel(scene, p, scene.carrier_downlink_hz))
        else:
            targets[i] = p
    return LabeledDataset(
        inputs=inputs, targets=targets, task=task, n_antennas=N, n_subcarriers=S,
        antenna_subset=subset, positions=pos,
    )
