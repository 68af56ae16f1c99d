"""Scenario geometry, Rayleigh fading draws, and composite channel gains.

Amplitude path gains follow a d^(-alpha/2) law; small-scale fading is unit
circularly-symmetric complex Gaussian.  The surface applies one phase shift
per element, so the amplitude toward a receiver is the phased cascade sum
plus the direct path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import NoiseUncertaintyModel


def _as_point(p) -> tuple[float, float]:
    x, y = p
    return (float(x), float(y))


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


@dataclass(frozen=True)
class Scenario:
    """Static layout and system parameters for one covert-link instance.

    Attributes
    ----------
    pos_alice, pos_bob, pos_irs, pos_willie : tuple of float
        Planar coordinates in meters.
    n_units : int
        Number of reflecting elements, >= 0 (0 disables the surface).
    alpha : float
        Path-loss exponent, > 0.
    sigma2_b : float
        Receiver noise power at Bob in watts, > 0.
    noise : NoiseUncertaintyModel
        Warden noise-power uncertainty.
    xi : float
        Covertness level in [0, 1]: require PFA + PMD >= xi at the warden's
        best threshold.
    p_max : float
        Transmit power budget in watts, >= 0.
    tx_prob : float
        Prior probability that the transmitter is active, in [0, 1].
    """

    pos_alice: tuple[float, float]
    pos_bob: tuple[float, float]
    pos_irs: tuple[float, float]
    pos_willie: tuple[float, float]
    n_units: int
    alpha: float
    sigma2_b: float
    noise: NoiseUncertaintyModel
    xi: float
    p_max: float
    tx_prob: float = 0.5

    def __post_init__(self):
        for name in ("pos_alice", "pos_bob", "pos_irs", "pos_willie"):
            object.__setattr__(self, name, _as_point(getattr(self, name)))
        if self.n_units < 0 or int(self.n_units) != self.n_units:
            raise ValueError(f"n_units must be a nonnegative integer, got {self.n_units!r}")
        object.__setattr__(self, "n_units", int(self.n_units))
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not (self.sigma2_b > 0.0 and math.isfinite(self.sigma2_b)):
            raise ValueError(f"sigma2_b must be a positive power, got {self.sigma2_b!r}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi!r}")
        if not (self.p_max >= 0.0 and math.isfinite(self.p_max)):
            raise ValueError(f"p_max must be a nonnegative power, got {self.p_max!r}")
        if not 0.0 <= self.tx_prob <= 1.0:
            raise ValueError(f"tx_prob must lie in [0, 1], got {self.tx_prob!r}")
        pts = {
            "alice": self.pos_alice,
            "bob": self.pos_bob,
            "irs": self.pos_irs,
            "willie": self.pos_willie,
        }
        for a in ("bob", "irs", "willie"):
            if _dist(pts["alice"], pts[a]) <= 0.0:
                raise ValueError(f"alice and {a} must occupy distinct positions")
        if _dist(pts["irs"], pts["bob"]) <= 0.0 or _dist(pts["irs"], pts["willie"]) <= 0.0:
            raise ValueError("the surface must not coincide with a receiver")

    # pairwise distances, meters
    @property
    def d_ab(self) -> float:
        return _dist(self.pos_alice, self.pos_bob)

    @property
    def d_aw(self) -> float:
        return _dist(self.pos_alice, self.pos_willie)

    @property
    def d_ai(self) -> float:
        return _dist(self.pos_alice, self.pos_irs)

    @property
    def d_ib(self) -> float:
        return _dist(self.pos_irs, self.pos_bob)

    @property
    def d_iw(self) -> float:
        return _dist(self.pos_irs, self.pos_willie)


def pathloss_amplitude(distance: float, alpha: float) -> float:
    """Amplitude-domain path gain ``d^(-alpha/2)`` (power decays as d^-alpha)."""
    if not distance > 0.0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return float(distance) ** (-0.5 * float(alpha))


@dataclass(frozen=True)
class ChannelRealization:
    """One small-scale fading draw plus the scenario's fixed path gains.

    ``h_*`` are unit CN(0,1) fading coefficients, ``g_*`` the amplitude path
    gains for the matching hops.  Array fields hold one entry per surface
    element.
    """

    h_ab: complex
    h_aw: complex
    h_ai: np.ndarray
    h_ib: np.ndarray
    h_iw: np.ndarray
    g_ab: float
    g_aw: float
    g_ai: float
    g_ib: float
    g_iw: float

    def __post_init__(self):
        for name in ("h_ai", "h_ib", "h_iw"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.complex128))
        n = self.h_ai.shape[0]
        if self.h_ib.shape != (n,) or self.h_iw.shape != (n,) or self.h_ai.ndim != 1:
            raise ValueError("cascade fading arrays must share one length")
        for name in ("g_ab", "g_aw", "g_ai", "g_ib", "g_iw"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be a positive amplitude gain")

    @property
    def n_units(self) -> int:
        return self.h_ai.shape[0]

    def cascade(self, target: str) -> np.ndarray:
        """Per-element cascade amplitudes toward ``target`` before phasing."""
        h_ix, g_ix = self._hop(target)
        return (self.g_ai * g_ix) * (self.h_ai * h_ix)

    def direct(self, target: str) -> complex:
        h_ix = {"bob": self.h_ab, "willie": self.h_aw}[target]
        g_ix = {"bob": self.g_ab, "willie": self.g_aw}[target]
        return g_ix * h_ix

    def _hop(self, target: str):
        if target == "bob":
            return self.h_ib, self.g_ib
        if target == "willie":
            return self.h_iw, self.g_iw
        raise ValueError(f"target must be 'bob' or 'willie', got {target!r}")


@dataclass(frozen=True, eq=False)
class IrsConfiguration:
    """Per-element phase shifts, stored canonically in [0, 2*pi)."""

    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=np.float64)
        if ph.ndim != 1:
            raise ValueError("phases must be a 1-D array")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases must be finite")
        ph = np.mod(ph, 2.0 * np.pi)
        # mod can return 2*pi for tiny negative inputs; fold those back
        ph[ph >= 2.0 * np.pi] = 0.0
        object.__setattr__(self, "phases", ph)

    @property
    def n_units(self) -> int:
        return self.phases.shape[0]

    def __eq__(self, other):
        if not isinstance(other, IrsConfiguration):
            return NotImplemented
        return self.phases.shape == other.phases.shape and bool(
            np.all(self.phases == other.phases)
        )

    def __hash__(self):
        return hash(self.phases.tobytes())


def sample_realization(scenario: Scenario, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization.

    Draw order is fixed (direct Bob, direct Willie, then the three cascade
    arrays) so a given generator state always yields the same realization.
    """

    def cn(size=None):
        re = rng.standard_normal(size)
        im = rng.standard_normal(size)
        return (re + 1j * im) / np.sqrt(2.0)

    n = scenario.n_units
    return ChannelRealization(
        h_ab=complex(cn()),
        h_aw=complex(cn()),
        h_ai=cn(n),
        h_ib=cn(n),
        h_iw=cn(n),
        g_ab=pathloss_amplitude(scenario.d_ab, scenario.alpha),
        g_aw=pathloss_amplitude(scenario.d_aw, scenario.alpha),
        g_ai=pathloss_amplitude(scenario.d_ai, scenario.alpha),
        g_ib=pathloss_amplitude(scenario.d_ib, scenario.alpha),
        g_iw=pathloss_amplitude(scenario.d_iw, scenario.alpha),
    )


def effective_amplitude(real: ChannelRealization, irs: IrsConfiguration, target: str) -> complex:
    """Composite amplitude at ``target``: phased cascade sum plus direct path."""
    if irs.n_units != real.n_units:
        raise ValueError(f"phase count {irs.n_units} does not match element count {real.n_units}")
    casc = real.cascade(target)
    return complex(np.sum(casc * np.exp(1j * irs.phases)) + real.direct(target))


def covert_rate(amplitude_bob: complex, p_a: float, sigma2_b: float) -> float:
    """Achievable rate ``log2(1 + |amp|^2 P / sigma2)`` in bits per channel use."""
    if p_a < 0.0:
        raise ValueError(f"p_a must be nonnegative, got {p_a!r}")
    if not sigma2_b > 0.0:
        raise ValueError(f"sigma2_b must be positive, got {sigma2_b!r}")
    return math.log2(1.0 + (abs(amplitude_bob) ** 2) * p_a / sigma2_b)
