"""Trapped-ion server and measurement-only photonic client."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import qcore
from .noise import DephasingRate, depolarize, sample_rate, werner_emission
from .params import FixedParams, TunableParams
from .qcore import DensityMatrix, GateSpec
from .simkernel import ClockError

QWP = math.pi / 2
HWP = math.pi


@dataclass
class IonSlot:
    index: int
    r: DephasingRate | None = None
    initialized_at: float = 0.0
    last_advanced: float = 0.0
    live: bool = False
    stored: bool = False  # True once the ion sits in the joint register
    dephased_for: float = 0.0  # total time over which dephasing was applied


@dataclass
class Photon:
    """Polarisation qubit still entangled with its emitting ion.

    ``state`` is the 2-qubit (ion, photon) density matrix.
    """

    slot: int
    state: DensityMatrix
    emitted_at: float


class TrappedIonServer:
    """Ion-trap memory with noisy native gates and Gaussian dephasing.

    Stored ions share one joint register; an ion whose photon is still in
    flight is kept separately (it is uncorrelated with the register) and is
    merged in by :meth:`store`.
    """

    def __init__(self, tunable: TunableParams, fixed: FixedParams | None = None,
                 num_slots: int = 5, shared_rate: bool = False, rng: np.random.Generator | None = None):
        self.tunable = tunable
        self.fixed = fixed or FixedParams()
        self.now = 0.0
        self.register: DensityMatrix | None = None
        self.positions: list[int] = []
        self.slots = [IonSlot(i) for i in range(num_slots)]
        self.shared_rate = shared_rate
        self._shared = sample_rate(rng) if (shared_rate and rng is not None) else None
        self.tau_us = tunable.coherence_time * 1e3

    @property
    def dephasing_enabled(self) -> bool:
        return math.isfinite(self.tau_us)

    def _set_clock(self, now: float) -> None:
        if now < self.now - 1e-9:
            raise ClockError(f"server clock cannot go back from {self.now} to {now}")
        self.now = max(self.now, now)

    def _slot(self, slot: int, need_stored=False) -> IonSlot:
        s = self.slots[slot]
        if not s.live or (need_stored and not s.stored):
            raise RuntimeError(f"ion slot {slot} is not live")
        return s

    def init_ion(self, slot: int, now: float, rng: np.random.Generator) -> None:
        if self.slots[slot].live:
            self.discard(slot)
        self._set_clock(now)
        s = self.slots[slot]
        if self.shared_rate:
            if self._shared is None:
                self._shared = sample_rate(rng, now)
            s.r = self._shared
        else:
            s.r = sample_rate(rng, now)
        s.initialized_at = s.last_advanced = self.now
        s.live, s.stored, s.dephased_for = True, False, 0.0
        self.now += self.fixed.init_duration * 1e-3

    def emit_photon(self, slot: int, rng: np.random.Generator | None = None) -> Photon:
        s = self._slot(slot)
        if s.stored:
            raise RuntimeError(f"ion slot {slot} already holds a prepared qubit")
        self.now += self.fixed.emission_duration * 1e-3
        return Photon(slot, werner_emission(self.tunable.emission_fidelity), self.now)

    def store(self, slot: int, ion: DensityMatrix, now: float) -> None:
        """Place a remotely prepared ion (whose photon was measured) into the register."""
        s = self._slot(slot)
        self.advance_to(now)
        angle = self._angle(s, now)
        s.dephased_for += now - s.last_advanced
        s.last_advanced = now
        if angle:
            ion = qcore.apply_z_phases(ion, [angle])
        self.register = ion if self.register is None else qcore.tensor(self.register, ion)
        self.positions.append(slot)
        s.stored = True

    def discard(self, slot: int) -> None:
        s = self.slots[slot]
        if s.stored:
            pos = self.positions.index(slot)
            self.register = None if len(self.positions) == 1 else qcore.trace_out(self.register, pos)
            self.positions.pop(pos)
        s.live = s.stored = False

    def _angle(self, s: IonSlot, now: float) -> float:
        if not self.dephasing_enabled:
            return 0.0
        return s.r.r * (now - s.last_advanced) / self.tau_us

    def advance_to(self, now: float) -> None:
        """Apply each stored ion's dephasing rotation up to ``now``."""
        self._set_clock(now)
        if self.register is None:
            return
        angles = []
        for slot in self.positions:
            s = self.slots[slot]
            angles.append(self._angle(s, now))
            s.dephased_for += now - s.last_advanced
            s.last_advanced = now
        if self.dephasing_enabled:
            self.register = qcore.apply_z_phases(self.register, angles)

    def gate_duration(self, g: GateSpec) -> float:
        return self.fixed.entangling_duration if g.is_entangling else self.fixed.rotation_duration

    def apply_gate(self, g: GateSpec) -> None:
        """``g.targets`` are slot indices."""
        for t in g.targets:
            self._slot(t, need_stored=True)
        self.advance_to(self.now + self.gate_duration(g))
        pos = [self.positions.index(t) for t in g.targets]
        self.register = qcore.apply_unitary(self.register, qcore.gate_matrix(g), pos)
        fid = self.tunable.entangling_gate_fidelity if g.is_entangling else self.tunable.sq_gate_fidelity
        if fid < 1.0:
            self.register = depolarize(self.register, pos, fid)

    def measure_ion(self, slot: int, delta: float, rng: np.random.Generator,
                    now: float | None = None) -> int:
        """Read out ``slot`` in the |+-_delta> basis; 0 means |+_delta>. Frees the slot."""
        self._slot(slot, need_stored=True)
        if now is not None:
            self.advance_to(now)
        self.advance_to(self.now + self.fixed.readout_duration)
        pos = self.positions.index(slot)
        bit, rest = qcore.measure_basis(self.register, pos, delta, rng, remove=True)
        self.register = rest
        self.positions.pop(pos)
        s = self.slots[slot]
        s.live = s.stored = False
        return bit


# --- client optics ------------------------------------------------------------

@dataclass(frozen=True)
class WaveplateSpec:
    retardation: float
    axis: float
    retardation_error: float = 0.0
    axis_error: float = 0.0

    def __post_init__(self):
        if not (math.isclose(self.retardation, QWP) or math.isclose(self.retardation, HWP)):
            raise ValueError("retardation must be pi/2 (quarter) or pi (half)")


def _jones(delta, x):
    """Retarder Jones matrix; broadcasts over array arguments."""
    delta = np.asarray(delta, dtype=float)
    x = np.asarray(x, dtype=float)
    c, s = np.cos(x), np.sin(x)
    e = np.exp(1j * delta)
    off = (1 - e) * c * s
    m = np.stack([np.stack([c * c + e * s * s, off], -1), np.stack([off, s * s + e * c * c], -1)], -2)
    return np.exp(-1j * delta / 2)[..., None, None] * m


def _jones_scalar(delta: float, x: float) -> np.ndarray:
    c, s = math.cos(x), math.sin(x)
    e = complex(math.cos(delta), math.sin(delta))
    off = (1 - e) * c * s
    ph = complex(math.cos(delta / 2), -math.sin(delta / 2))
    return np.array([[ph * (c * c + e * s * s), ph * off], [ph * off, ph * (s * s + e * c * c)]])


def waveplate_unitary(w: WaveplateSpec) -> np.ndarray:
    return _jones(w.retardation + w.retardation_error, w.axis + w.axis_error)


def rotation_settings(theta: float) -> tuple[float, float, float]:
    """Fast-axis angles (half plate, first quarter plate, second quarter plate).

    With these, the photon state that steers the ion into |+_theta> exits on the
    H port of the beam splitter for every theta.
    """
    return theta / 4 - 3 * math.pi / 4, theta / 2, theta / 2 + math.pi / 4


STANDARD_SETTINGS = (0.0, 0.0, 0.0)  # H, Q, Q at zero: identity up to phase
PLATE_RETARDATIONS = (HWP, QWP, QWP)


def plate_settings(basis) -> tuple[float, float, float]:
    if basis == qcore.STANDARD or basis is None:
        return STANDARD_SETTINGS
    return rotation_settings(float(basis))


def optics_matrix(basis, deviations=None) -> np.ndarray:
    """Jones matrix of the HWP -> QWP -> QWP chain; ``deviations`` is ((dd, dx),)*3."""
    if deviations is None:
        deviations = ((0.0, 0.0),) * 3
    m = None
    for ret, axis, (dd, dx) in zip(PLATE_RETARDATIONS, plate_settings(basis), deviations):
        j = _jones_scalar(ret + dd, axis + dx)
        m = j if m is None else j @ m
    return m


def photon_target_state(basis) -> np.ndarray:
    """Photon polarisation whose detection as outcome 0 leaves the ion in the basis' 0 state."""
    if basis == qcore.STANDARD or basis is None:
        return np.array([1, 0], dtype=complex)
    # <phi|photon (|0H> + |1V>) = conj(phi_H)|0> + conj(phi_V)|1>
    return qcore.equatorial_vector(-float(basis))


def waveplate_error_probability(sigma: float, nodes: int = 5) -> float:
    """Mean wrong-outcome probability over theta in {k pi/4} when every plate's
    retardation and axis carry independent N(0, sigma^2) deviations.

    Evaluated with tensor-product Gauss-Hermite quadrature.
    """
    if sigma == 0:
        return 0.0
    xi, wi = np.polynomial.hermite.hermgauss(nodes)
    dev = math.sqrt(2) * sigma * xi
    w = wi / math.sqrt(math.pi)
    dd, dx = np.meshgrid(dev, dev, indexing="ij")
    pair_w = np.outer(w, w).ravel()
    dd, dx = dd.ravel(), dx.ravel()
    total = 0.0
    for k in range(8):
        theta = k * math.pi / 4
        mats = [_jones(ret + dd, ax + dx) for ret, ax in zip(PLATE_RETARDATIONS, rotation_settings(theta))]
        chain = np.einsum("cij,bjk,akl->abcil", mats[2], mats[1], mats[0])
        out = chain @ photon_target_state(theta)
        p_wrong = np.abs(out[..., 1]) ** 2
        weights = pair_w[:, None, None] * pair_w[None, :, None] * pair_w[None, None, :]
        total += float(np.sum(weights * p_wrong))
    return total / 8


@lru_cache(maxsize=None)
def calibrate_waveplate_sigma(error_prob: float) -> float:
    """Standard deviation (rad) of each plate deviation giving ``error_prob`` wrong outcomes."""
    if error_prob <= 0:
        return 0.0
    if error_prob >= 0.25:
        raise ValueError("waveplate error probability must be below 0.25")
    return brentq(lambda s: waveplate_error_probability(s) - error_prob, 1e-6, 0.6, xtol=1e-12)


VALID, INVALID, LOST = "valid", "invalid", "lost"


@dataclass
class PhotonOutcome:
    status: str
    m: int | None = None
    ion: DensityMatrix | None = None
    photon_arrived: bool = False


class MeasurementClient:
    """Waveplates, polarising beam splitter and two single-photon detectors."""

    def __init__(self, fixed: FixedParams | None = None):
        self.fixed = fixed or FixedParams()
        self.sigma = calibrate_waveplate_sigma(self.fixed.waveplate_error_prob)

    rotation_settings = staticmethod(rotation_settings)
    waveplate_unitary = staticmethod(waveplate_unitary)

    def sample_optics(self, basis, rng: np.random.Generator) -> np.ndarray:
        if self.sigma == 0:
            return optics_matrix(basis)
        devs = rng.normal(0.0, self.sigma, size=(3, 2))
        return optics_matrix(basis, devs.tolist())

    def route(self, photon: Photon, basis, rng: np.random.Generator) -> tuple[int, int, DensityMatrix]:
        """Send the photon through the optics and PBS.

        Returns (true port, reported port, ion state conditioned on the true port).
        """
        u = self.sample_optics(basis, rng)
        # unnormalised ion state for each PBS port k: sum_pq U[k,p] rho[i p, j q] conj(U[k,q])
        r = photon.state.data.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3)  # i j p q
        branches = ((r @ u.conj().T) * u.T).sum(axis=2)  # i j k
        p0 = float((branches[0, 0, 0] + branches[1, 1, 0]).real)
        port = 0 if rng.random() < p0 else 1
        b = branches[:, :, port]
        ion = DensityMatrix(b / (b[0, 0] + b[1, 1]).real, 1)
        reported = port ^ 1 if rng.random() < self.fixed.pbs_crosstalk else port
        return port, reported, ion

    def measure_photon(self, photon: Photon | None, basis, rng: np.random.Generator,
                       heralded: bool = False, emitted: Photon | None = None) -> PhotonOutcome:
        """Detect one time window.

        ``photon`` is None when the photon was lost in transit (``emitted`` then
        carries the ion it left behind, if known). ``heralded=True`` samples
        conditioned on exactly one click, the case that ends an RSP attempt.
        """
        dc = self.fixed.dark_count_prob
        if photon is not None:
            _, port, ion = self.route(photon, basis, rng)
            if heralded:
                return PhotonOutcome(VALID, port, ion, True)
            other_dark = rng.random() < dc
            if other_dark:
                return PhotonOutcome(INVALID, None, ion, True)
            return PhotonOutcome(VALID, port, ion, True)
        ion = qcore.trace_out(emitted.state, 1) if emitted is not None else None
        if heralded:
            return PhotonOutcome(VALID, int(rng.random() < 0.5), ion, False)
        clicks = rng.random(2) < dc
        if clicks.all():
            return PhotonOutcome(INVALID, None, ion, False)
        if clicks.any():
            return PhotonOutcome(VALID, int(np.argmax(clicks)), ion, False)
        return PhotonOutcome(LOST, None, ion, False)

    def herald_split(self, arrival_prob: float) -> tuple[float, float]:
        """Per-attempt probabilities of (real single click, dark-count-only single click)."""
        dc = self.fixed.dark_count_prob
        real = arrival_prob * (1 - dc)
        fake = (1 - arrival_prob) * 2 * dc * (1 - dc)
        return real, fake
