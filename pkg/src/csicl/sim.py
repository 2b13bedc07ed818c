"""Synthetic CSI domain generation from a multipath scattering model.

A scene holds the radio geometry (antennas, static links, environment
scatterers); a user profile holds per-activity scattering trajectories with a
deterministic per-user geometric perturbation, which is what makes two users
two different domains.  All generation is a pure function of (configs, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0

# amplitude prefactor of a single-scattering path: lambda*sqrt(G*rcs)/((4pi)^{3/2} dT dR)
_FOUR_PI_32 = (4.0 * math.pi) ** 1.5


class SimulationError(ValueError):
    """Raised for out-of-contract simulation requests (out-of-band f, bad t, ...)."""


@dataclass
class DynamicPath:
    """One single-scattering path: a moving scatter point with gain and cross-section.

    The trajectory is piecewise-linear between keyframes and holds the boundary
    position outside the keyframe span, so it is defined on all of [0, T].
    """

    gain: float
    rcs: float
    key_times: np.ndarray
    key_positions: np.ndarray

    def __post_init__(self):
        self.key_times = np.asarray(self.key_times, dtype=float)
        self.key_positions = np.asarray(self.key_positions, dtype=float)
        if self.gain <= 0 or self.rcs <= 0:
            raise SimulationError("path gain and rcs must be positive")
        if self.key_times.ndim != 1 or self.key_positions.shape != (len(self.key_times), 3):
            raise SimulationError("keyframes must be (K,) times with (K, 3) positions")
        if len(self.key_times) < 1 or np.any(np.diff(self.key_times) <= 0):
            raise SimulationError("keyframe times must be strictly increasing")

    def position(self, t) -> np.ndarray:
        """Scatter-point position at time(s) t, shape t.shape + (3,)."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (3,))
        for ax in range(3):
            out[..., ax] = np.interp(t, self.key_times, self.key_positions[:, ax])
        return out

    def shifted(self, offset) -> "DynamicPath":
        return DynamicPath(self.gain, self.rcs, self.key_times.copy(),
                           self.key_positions + np.asarray(offset, dtype=float))


@dataclass
class SceneConfig:
    """Radio scene: antennas, static per-link gains, environment dynamics, sampling."""

    carrier_frequency: float
    bandwidth: float
    n_subcarriers: int
    n_tx: int
    n_rx: int
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    static_gain: np.ndarray          # complex, (n_subcarriers, n_tx, n_rx)
    env_paths: list[DynamicPath]
    noise_std: float
    phase_error_enabled: bool
    duration: float
    packet_rate: float

    def __post_init__(self):
        self.tx_positions = np.asarray(self.tx_positions, dtype=float).reshape(self.n_tx, 3)
        self.rx_positions = np.asarray(self.rx_positions, dtype=float).reshape(self.n_rx, 3)
        self.static_gain = np.asarray(self.static_gain, dtype=complex)
        if self.n_rx < 2:
            raise SimulationError("need n_rx >= 2: conjugate multiplication uses a reference chain")
        if min(self.n_subcarriers, self.n_tx) < 1:
            raise SimulationError("antenna/subcarrier counts must be >= 1")
        if self.bandwidth <= 0 or self.duration <= 0:
            raise SimulationError("bandwidth and duration must be positive")
        if self.noise_std < 0 or self.packet_rate < 0:
            raise SimulationError("noise_std and packet_rate must be nonnegative")
        if self.static_gain.shape != (self.n_subcarriers, self.n_tx, self.n_rx):
            raise SimulationError("static_gain must have shape (n_subcarriers, n_tx, n_rx)")

    @property
    def n_links(self) -> int:
        return self.n_subcarriers * self.n_tx * self.n_rx

    @property
    def subcarrier_frequencies(self) -> np.ndarray:
        if self.n_subcarriers == 1:
            return np.array([self.carrier_frequency])
        rel = np.arange(self.n_subcarriers) / (self.n_subcarriers - 1) - 0.5
        return self.carrier_frequency + self.bandwidth * rel


@dataclass
class UserProfile:
    """Per-user scattering geometry: one trajectory set per activity class.

    The perturbation record (offsets, amplitude scale, speed scale) is what was
    applied to the shared activity library when the profile was built; it is
    deterministic given the user seed.
    """

    user_id: int
    body_scatterers: dict[int, list[DynamicPath]]
    perturbation: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.body_scatterers)

    def paths_for(self, activity: int) -> list[DynamicPath]:
        if activity not in self.body_scatterers:
            raise SimulationError(f"activity {activity} not in profile (classes "
                                  f"{sorted(self.body_scatterers)})")
        return self.body_scatterers[activity]


@dataclass
class CsiSequence:
    """One sensing instance: N nonequispaced timestamps and N complex CSI samples."""

    timestamps: np.ndarray            # (N,)
    samples: np.ndarray               # complex, (N, L_H)
    label: int | None = None          # class id in 1..C

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.samples = np.asarray(self.samples, dtype=complex)
        self.validate()

    def validate(self):
        if self.timestamps.ndim != 1 or len(self.timestamps) < 2:
            raise SimulationError("a CSI sequence needs at least 2 samples")
        if np.any(np.diff(self.timestamps) <= 0):
            raise SimulationError("timestamps must be strictly increasing")
        if self.samples.shape[0] != len(self.timestamps):
            raise SimulationError("timestamps and samples disagree in length")

    @property
    def n_samples(self) -> int:
        return len(self.timestamps)


@dataclass
class DomainDataset:
    """Labeled CSI sequences drawn from one domain (one synthetic user)."""

    domain_id: int
    entries: list[tuple[CsiSequence, np.ndarray]]   # (sequence, one-hot label)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    @property
    def n_classes(self) -> int:
        return len(self.entries[0][1]) if self.entries else int(self.metadata.get("n_classes", 0))

    def validate(self):
        for seq, onehot in self.entries:
            seq.validate()
            if not (np.isclose(onehot.sum(), 1.0) and np.all((onehot == 0) | (onehot == 1))):
                raise SimulationError("labels must be one-hot")
            if seq.label is not None and onehot[seq.label - 1] != 1:
                raise SimulationError("one-hot label disagrees with sequence label")


# ---------------------------------------------------------------------------
# channel model
# ---------------------------------------------------------------------------

def path_gain(path: DynamicPath, f, t, tx_pos, rx_pos) -> np.ndarray:
    """Single-scattering complex gain of one path for frequency f at time t.

    Broadcasts over f and t; tx_pos/rx_pos are single 3-vectors.
    """
    f = np.asarray(f, dtype=float)
    t = np.asarray(t, dtype=float)
    lam = C_LIGHT / f
    pos = path.position(t)
    d_tx = np.linalg.norm(pos - np.asarray(tx_pos), axis=-1)
    d_rx = np.linalg.norm(pos - np.asarray(rx_pos), axis=-1)
    amp = lam * math.sqrt(path.gain * path.rcs) / (_FOUR_PI_32 * d_tx * d_rx)
    return amp * np.exp(-2j * math.pi * (d_tx + d_rx) / lam)


def _paths_gain_grid(paths: list[DynamicPath], freqs, times, tx_positions, rx_positions):
    """Sum of path gains on the (time, subcarrier, tx, rx) grid."""
    n_t, n_f = len(times), len(freqs)
    n_tx, n_rx = len(tx_positions), len(rx_positions)
    total = np.zeros((n_t, n_f, n_tx, n_rx), dtype=complex)
    lam = C_LIGHT / np.asarray(freqs, dtype=float)
    for path in paths:
        pos = path.position(times)                                 # (n_t, 3)
        d_tx = np.linalg.norm(pos[:, None, :] - tx_positions[None], axis=-1)   # (n_t, n_tx)
        d_rx = np.linalg.norm(pos[:, None, :] - rx_positions[None], axis=-1)   # (n_t, n_rx)
        d_sum = d_tx[:, :, None] + d_rx[:, None, :]                # (n_t, n_tx, n_rx)
        d_prod = d_tx[:, :, None] * d_rx[:, None, :]
        pref = math.sqrt(path.gain * path.rcs) / _FOUR_PI_32
        amp = pref * lam[None, :, None, None] / d_prod[:, None, :, :]
        phase = np.exp(-2j * math.pi * d_sum[:, None, :, :] / lam[None, :, None, None])
        total += amp * phase
    return total


def _check_in_band(scene: SceneConfig, f: float):
    lo = scene.carrier_frequency - scene.bandwidth / 2
    hi = scene.carrier_frequency + scene.bandwidth / 2
    if not lo <= f <= hi:
        raise SimulationError(f"frequency {f} outside band [{lo}, {hi}]")


def channel_gain(scene: SceneConfig, user: UserProfile, activity: int, f: float, t: float,
                 rng: np.random.Generator, tx: int = 0, rx: int = 0,
                 phase: float | None = None) -> complex:
    """Complex gain of one (subcarrier-frequency, tx, rx) link at time t.

    Sums the static link gain, the environment scattering paths, the user's
    activity scattering paths, and a complex Gaussian noise draw, then applies
    the packet phase error exp(i*phi).  phi is drawn here unless supplied;
    pass the same value across the links of one packet to model the shared
    oscillator of the Rx chains.
    """
    _check_in_band(scene, f)
    if not 0.0 <= t <= scene.duration:
        raise SimulationError(f"time {t} outside [0, {scene.duration}]")
    sc = int(np.argmin(np.abs(scene.subcarrier_frequencies - f)))
    h = complex(scene.static_gain[sc, tx, rx])
    for path in scene.env_paths:
        h += complex(path_gain(path, f, t, scene.tx_positions[tx], scene.rx_positions[rx]))
    for path in user.paths_for(activity):
        h += complex(path_gain(path, f, t, scene.tx_positions[tx], scene.rx_positions[rx]))
    if scene.noise_std > 0:
        re, im = rng.standard_normal(2)
        h += scene.noise_std / math.sqrt(2.0) * (re + 1j * im)
    if scene.phase_error_enabled:
        if phase is None:
            phase = rng.uniform(0.0, 2.0 * math.pi)
        h *= np.exp(1j * phase)
    return h


def sample_packet_times(duration: float, rate: float, seed) -> np.ndarray:
    """Homogeneous Poisson packet arrival times on [0, duration], sorted strictly increasing."""
    if duration <= 0:
        raise SimulationError("duration must be positive")
    if rate < 0:
        raise SimulationError("rate must be nonnegative")
    rng = np.random.default_rng(seed)
    return _poisson_times(duration, rate, rng)


def _poisson_times(duration: float, rate: float, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(rate * duration)
    if n == 0:
        return np.empty(0)
    times = np.sort(rng.uniform(0.0, duration, size=n))
    # exact ties have probability zero but would break the strict-increase invariant
    return np.unique(times)


def packet_csi(scene: SceneConfig, user: UserProfile, activity: int,
               times: np.ndarray, rng: np.random.Generator,
               apply_phase_error: bool | None = None) -> np.ndarray:
    """CSI sample matrix (N, L_H) for the given packet times.

    One phase-error draw per packet, shared by all subcarriers and Rx chains
    (the Rx RF chains share an oscillator); noise is i.i.d. per link.  The
    phase draws always consume the rng stream so that enabling/disabling the
    phase error compares like for like on the same seed.
    """
    times = np.asarray(times, dtype=float)
    freqs = scene.subcarrier_frequencies
    h = _paths_gain_grid(scene.env_paths + user.paths_for(activity),
                         freqs, times, scene.tx_positions, scene.rx_positions)
    h += scene.static_gain[None]
    if scene.noise_std > 0:
        noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
        h += scene.noise_std / math.sqrt(2.0) * noise
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(len(times), scene.n_tx))
    if apply_phase_error is None:
        apply_phase_error = scene.phase_error_enabled
    if apply_phase_error:
        h = h * np.exp(1j * phases)[:, None, :, None]
    return h.reshape(len(times), -1)


def generate_domain(scene: SceneConfig, user: UserProfile, n_per_class: int, seed,
                    apply_phase_error: bool | None = None) -> DomainDataset:
    """Labeled domain dataset: n_per_class sequences per activity class.

    Each sequence owns its own rng stream derived from (seed, sequence index),
    so generation is order-independent and reproducible.
    """
    if n_per_class < 0:
        raise SimulationError("n_per_class must be nonnegative")
    classes = sorted(user.body_scatterers)
    n_classes = len(classes)
    entries = []
    for ci, activity in enumerate(classes):
        onehot = np.zeros(n_classes)
        onehot[ci] = 1.0
        for i in range(n_per_class):
            index = ci * n_per_class + i
            rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
            times = _poisson_times(scene.duration, scene.packet_rate, rng)
            attempt = 0
            while len(times) < 2:                    # Poisson can draw < 2 packets
                attempt += 1
                rng = np.random.default_rng(np.random.SeedSequence((seed, index, attempt)))
                times = _poisson_times(scene.duration, scene.packet_rate, rng)
            samples = packet_csi(scene, user, activity, times, rng, apply_phase_error)
            entries.append((CsiSequence(times, samples, label=activity), onehot.copy()))
    return DomainDataset(
        domain_id=user.user_id,
        entries=entries,
        metadata={"seed": int(seed), "user_id": user.user_id, "n_classes": n_classes,
                  "n_per_class": n_per_class},
    )


# ---------------------------------------------------------------------------
# variation-rate diagnostics
# ---------------------------------------------------------------------------

def _variation_rate(path: DynamicPath, f: float, t: float, tx_pos, rx_pos,
                    dt: float = 1e-6) -> float:
    """|dh/dt| of a single path estimated by central differences in t."""
    h_plus = path_gain(path, f, t + dt, tx_pos, rx_pos)
    h_minus = path_gain(path, f, t - dt, tx_pos, rx_pos)
    return abs((h_plus - h_minus) / (2.0 * dt))


def verify_variation_scaling(scene: SceneConfig, d_values,
                             rel_step: float = 1e-3) -> list[tuple[float, float, float]]:
    """Sensitivity of the CSI variation rate to the Tx-scatterer distance.

    For a single scattering path, sweeps the Tx antenna radially so only the
    Tx-scatterer distance d changes, and estimates
    (d/dd)|dh/dt| / |dh/dt| by central finite differences.  In the far field
    this relative derivative follows a -1/d law; each result row is
    (d, estimated relative derivative, -1/d).

    Distances must sit well inside the far-field regime (d >> wavelength and
    d >> the scatterer displacement per differencing step); offending values
    raise rather than returning a silently invalid estimate.
    """
    lam = C_LIGHT / scene.carrier_frequency
    velocity = np.array([0.25, 0.15, 0.05])
    t0, dt = 0.5, 1e-6
    step_disp = float(np.linalg.norm(velocity)) * dt
    for d in d_values:
        if d < 20.0 * lam or d < 1e4 * step_disp:
            raise SimulationError(
                f"d={d} m is below the far-field regime of the single-scattering "
                f"approximation (wavelength {lam:.4f} m)")
    path = DynamicPath(gain=1.0, rcs=1.0, key_times=np.array([0.0, 1.0]),
                       key_positions=np.array([[0.0, 0.0, 0.0], velocity]))
    rx_pos = np.array([0.0, 3.0, 0.0])
    f = scene.carrier_frequency

    def rate(d_tx: float) -> float:
        return _variation_rate(path, f, t0, np.array([-d_tx, 0.0, 0.0]), rx_pos, dt)

    results = []
    for d in d_values:
        dd = rel_step * d
        rel_deriv = (rate(d + dd) - rate(d - dd)) / (2.0 * dd * rate(d))
        results.append((float(d), float(rel_deriv), -1.0 / float(d)))
    return results


def measure_variation_ratio(scene: SceneConfig, d_user: float, d_env: float,
                            n_steps: int = 400) -> float:
    """Ratio of mean |Delta h| between a near (user) and a far (env) scatterer.

    Both scatterers move with the same radial velocity away from the Tx, and
    the far off-axis Rx keeps their Rx distances and radial rates nearly
    equal, so the ratio isolates the inverse dependence on the Tx-scatterer
    distance and should approximate d_env/d_user.
    """
    velocity = np.array([0.4, 0.0, 0.0])
    duration = 0.12        # keep the displacement small next to d_user
    times = np.linspace(0.0, duration, n_steps)
    tx_pos = np.zeros(3)
    rx_pos = np.array([0.0, 100.0, 0.0])
    f = scene.carrier_frequency

    def mean_step(d0: float) -> float:
        path = DynamicPath(1.0, 1.0, np.array([0.0, duration]),
                           np.array([[d0, 0.0, 0.0], [d0, 0.0, 0.0] + velocity * duration]))
        h = path_gain(path, f, times, tx_pos, rx_pos)
        return float(np.mean(np.abs(np.diff(h))))

    return mean_step(d_user) / mean_step(d_env)


# ---------------------------------------------------------------------------
# activity library and default scene
# ---------------------------------------------------------------------------

N_ACTIVITY_CLASSES = 10

# (frequency Hz, amplitude m, unit direction) of the primary motion per class;
# kept small enough that the per-packet phase advance stays unambiguous at the
# desk-scale packet rate
_ACTIVITY_MOTIFS = [
    ("push_pull", 0.90, 0.030, (1.0, 0.0, 0.0)),
    ("sweep", 0.70, 0.038, (0.0, 1.0, 0.0)),
    ("circle", 0.60, 0.026, None),               # circular in the xy plane
    ("zigzag", 1.00, 0.022, (1.0, 0.3, 0.0)),
    ("up_down", 0.80, 0.032, (0.0, 0.0, 1.0)),
    ("bend", 0.35, 0.055, (0.6, 0.0, -0.8)),
    ("bounce", 1.20, 0.020, (0.0, 0.0, 1.0)),
    ("rotate", 0.50, 0.030, None),               # circular in the xz plane
    ("jitter", 1.40, 0.012, (0.7, 0.0, 0.7)),
    ("shake", 1.10, 0.024, (0.7, 0.7, 0.0)),
]

_MOTION_SECONDS = 2.0     # movement window, then rest until the end of a sequence
_KEYFRAMES = 61


def _motif_offsets(name: str, freq: float, amp: float, direction, tt: np.ndarray) -> np.ndarray:
    """Displacement-from-anchor keyframes for one activity motif over the motion window."""
    w = 2.0 * math.pi * freq
    if direction is None:
        plane = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)) if name == "circle" else \
                ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0))
        u, v = np.array(plane[0]), np.array(plane[1])
        return amp * (np.cos(w * tt)[:, None] * u + np.sin(w * tt)[:, None] * v)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    if name == "zigzag":
        # triangle wave keeps the speed constant within each stroke
        saw = 2.0 * np.abs(((freq * tt) % 1.0) - 0.5) - 0.5
        return amp * 2.0 * saw[:, None] * u
    if name == "bounce":
        return amp * np.abs(np.sin(w * tt))[:, None] * u
    if name == "jitter":
        wave = 0.6 * np.sin(w * tt) + 0.4 * np.sin(2.3 * w * tt + 0.7)
        return amp * wave[:, None] * u
    if name == "bend":
        # one-shot excursion: out during the first half stroke, back after
        return amp * np.sin(np.clip(w * tt, 0.0, math.pi))[:, None] * u
    return amp * np.sin(w * tt)[:, None] * u


def activity_paths(class_id: int, anchor, duration: float,
                   amp_scale: float = 1.0, speed_scale: float = 1.0,
                   offsets: np.ndarray | None = None) -> list[DynamicPath]:
    """Hand-authored two-scatterer trajectory set for one activity class.

    Motion occupies [0, 2] s and the scatterers hold still for the remainder
    of the sequence.  amp_scale/speed_scale/offsets realize per-user geometry.
    """
    if not 1 <= class_id <= N_ACTIVITY_CLASSES:
        raise SimulationError(f"activity class {class_id} out of range")
    name, freq, amp, direction = _ACTIVITY_MOTIFS[class_id - 1]
    anchor = np.asarray(anchor, dtype=float)
    if offsets is None:
        offsets = np.zeros((2, 3))
    tt = np.linspace(0.0, _MOTION_SECONDS, _KEYFRAMES)
    paths = []
    # secondary scatterer: a second body part, smaller and time-lagged
    for s, (gain, lag, scale) in enumerate([(1.0, 0.0, 1.0), (0.6, 0.3, 0.55)]):
        disp = _motif_offsets(name, freq * speed_scale, amp * amp_scale * scale,
                              direction, np.maximum(tt - lag, 0.0))
        base = anchor + offsets[s] + np.array([0.0, 0.0, -0.12]) * s
        key_t, key_p = tt, base + disp
        if duration > _MOTION_SECONDS:               # hold through the rest window
            key_t = np.append(tt, duration)
            key_p = np.vstack([key_p, key_p[-1]])
        paths.append(DynamicPath(gain=gain, rcs=0.8, key_times=key_t, key_positions=key_p))
    return paths


def build_user_profile(user_id: int, seed, n_classes: int = N_ACTIVITY_CLASSES,
                       anchor=(0.30, 0.15, 0.0), duration: float = 3.0,
                       position_jitter: float = 0.1,
                       amp_range=(0.7, 1.3), speed_range=(0.8, 1.2)) -> UserProfile:
    """Deterministic per-user perturbation of the shared activity library.

    A user differs from the library by scatterer position offsets (up to
    position_jitter meters), a motion amplitude scale and a motion speed
    scale; this realizes the per-user domain shift.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, user_id)))
    amp_scale = float(rng.uniform(*amp_range))
    speed_scale = float(rng.uniform(*speed_range))
    half = position_jitter / math.sqrt(3.0)
    scatterers = {}
    all_offsets = []
    for c in range(1, n_classes + 1):
        offsets = rng.uniform(-half, half, size=(2, 3))
        all_offsets.append(offsets)
        scatterers[c] = activity_paths(c, anchor, duration, amp_scale, speed_scale, offsets)
    return UserProfile(
        user_id=user_id,
        body_scatterers=scatterers,
        perturbation={"amp_scale": amp_scale, "speed_scale": speed_scale,
                      "offsets": np.array(all_offsets)},
    )


def default_static_gain(scene_seed, n_subcarriers: int, n_tx: int, n_rx: int,
                        carrier_frequency: float, link_distance: float) -> np.ndarray:
    """Line-of-sight-scale static link gains with random per-link phases."""
    rng = np.random.default_rng(np.random.SeedSequence((scene_seed, 0x57A71C)))
    lam = C_LIGHT / carrier_frequency
    mag = lam / (4.0 * math.pi * link_distance)
    mags = mag * rng.uniform(0.9, 1.1, size=(n_subcarriers, n_tx, n_rx))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(n_subcarriers, n_tx, n_rx))
    return mags * np.exp(1j * phases)


def default_env_paths(scene_seed, duration: float, n_paths: int = 2) -> list[DynamicPath]:
    """Slowly moving far scatterers: user-independent dynamic interference."""
    rng = np.random.default_rng(np.random.SeedSequence((scene_seed, 0xE14B)))
    paths = []
    for _ in range(n_paths):
        base = np.array([rng.uniform(2.5, 4.5), rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.5)])
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        freq, amp = rng.uniform(0.15, 0.35), rng.uniform(0.03, 0.06)
        tt = np.linspace(0.0, duration, _KEYFRAMES)
        key_p = base + amp * np.sin(2.0 * math.pi * freq * tt)[:, None] * direction
        paths.append(DynamicPath(gain=1.0, rcs=1.5, key_times=tt, key_positions=key_p))
    return paths


def desk_scene(scene_seed: int = 0, *, carrier_frequency: float = 5.28e9,
               bandwidth: float = 40e6, n_subcarriers: int = 16, n_tx: int = 1,
               n_rx: int = 2, duration: float = 3.0, packet_rate: float = 20.0,
               snr_db: float = 20.0, phase_error_enabled: bool = True,
               n_env_paths: int = 2, tx_rx_distance: float = 3.0,
               rx_spacing: float = 0.06) -> SceneConfig:
    """Desk-scale default scene; the full measurement shape stays reachable
    through the keyword overrides (e.g. 117 subcarriers, rate 100)."""
    tx_positions = np.zeros((n_tx, 3))
    tx_positions[:, 1] = rx_spacing * np.arange(n_tx)
    rx_positions = np.zeros((n_rx, 3))
    rx_positions[:, 0] = tx_rx_distance
    rx_positions[:, 1] = rx_spacing * np.arange(n_rx)
    static = default_static_gain(scene_seed, n_subcarriers, n_tx, n_rx,
                                 carrier_frequency, tx_rx_distance)
    noise_std = float(np.mean(np.abs(static))) * 10.0 ** (-snr_db / 20.0)
    return SceneConfig(
        carrier_frequency=carrier_frequency,
        bandwidth=bandwidth,
        n_subcarriers=n_subcarriers,
        n_tx=n_tx,
        n_rx=n_rx,
        tx_positions=tx_positions,
        rx_positions=rx_positions,
        static_gain=static,
        env_paths=default_env_paths(scene_seed, duration, n_env_paths),
        noise_std=noise_std,
        phase_error_enabled=phase_error_enabled,
        duration=duration,
        packet_rate=packet_rate,
    )
