"""Single-photon Mach-Zehnder interferometer on a four-channel Fock basis.

Channels 1 and 2 feed a beamsplitter whose outputs are channels 3 and 4.
Mirrors relabel 3 -> 1 and 4 -> 2 so the second beamsplitter reuses the
same matrix; after it, D1 sits on channel 3 and D2 on channel 4. The
which-path detector D3 sits on the relabeled channel 1 (path B1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantum import ALG_TOL, make_rng

BASIS_LABELS = ("1000", "0100", "0010", "0001")
POINTER_LABELS = ("E0", "E1")
_B = np.array([[1, 1j], [1j, 1]]) / np.sqrt(2)
BEAMSPLITTER = np.block([[np.zeros((2, 2)), _B], [_B, np.zeros((2, 2))]])
MIRRORS = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]]).astype(complex)
DETECTOR_CHANNEL = {"D1": 2, "D2": 3}
D3_CHANNEL = 0


@dataclass(frozen=True)
class FockState4:
    """Single-excitation amplitudes, optionally entangled with a D3 pointer.

    With a pointer the amplitudes have shape (4, 2): channel by pointer state.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape not in ((4,), (4, 2)):
            raise ValueError(f"amplitudes must have shape (4,) or (4, 2), got {a.shape}")
        if abs(np.linalg.norm(a) - 1) > ALG_TOL:
            raise ValueError("state is not normalized")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def channel(cls, ch: int) -> FockState4:
        """Photon in channel ``ch`` (1-based)."""
        a = np.zeros(4, dtype=complex)
        a[ch - 1] = 1
        return cls(a)

    @property
    def has_pointer(self) -> bool:
        return self.amplitudes.ndim == 2

    def channel_populations(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p.sum(axis=1) if self.has_pointer else p

    def labels(self) -> list[str]:
        if not self.has_pointer:
            return list(BASIS_LABELS)
        return [f"{c}|{e}" for c in BASIS_LABELS for e in POINTER_LABELS]

    def to_csv_rows(self) -> list[tuple[str, float, float]]:
        flat = self.amplitudes.reshape(-1)
        return [(lab, float(z.real), float(z.imag)) for lab, z in zip(self.labels(), flat)]


@dataclass(frozen=True)
class DetectorModel:
    placement: str = "B1"
    sdc_connected: bool = True

    def __post_init__(self):
        if self.placement != "B1":
            raise ValueError(f"unsupported detector placement {self.placement!r}")


def _apply(u: np.ndarray, state: FockState4) -> FockState4:
    return FockState4(u @ state.amplitudes)


def beamsplitter(state: FockState4, which: str = "BS1") -> FockState4:
    """BS1 maps channels 1, 2 onto 3, 4; BS2 first applies the mirrors."""
    if which == "BS1":
        u = BEAMSPLITTER
    elif which == "BS2":
        u = BEAMSPLITTER @ MIRRORS
    else:
        raise ValueError(f"unknown beamsplitter {which!r}")
    return _apply(u, state)


def couple_d3(state: FockState4) -> FockState4:
    """Which-path coupling: pointer flips E0 -> E1 iff the photon is on B1.

    Applied after the mirrors, so B1 is channel 1.
    """
    if state.has_pointer:
        raise ValueError("detector already coupled")
    a = np.zeros((4, 2), dtype=complex)
    a[:, 0] = state.amplitudes
    a[D3_CHANNEL, 1] = a[D3_CHANNEL, 0]
    a[D3_CHANNEL, 0] = 0
    return FockState4(a)


def _bs2_unless_absorbed(state: FockState4) -> FockState4:
    """BS2 on the E0 branch; on E1 the photon was absorbed at D3."""
    a = state.amplitudes.copy()
    a[:, 0] = BEAMSPLITTER @ a[:, 0]
    return FockState4(a)


@dataclass
class MzResult:
    state: FockState4
    table: dict[str, float] | None

    @property
    def isolated(self) -> bool:
        return self.table is None


def run_mz(detector_d3: bool, detector: DetectorModel | None = None,
           initial: FockState4 | None = None) -> MzResult:
    """Propagate the photon and, when observed by SDC-connected detectors, tabulate outcomes.

    With an isolated D3 the entangled joint state is returned without a table.
    """
    state = FockState4.channel(1) if initial is None else initial
    state = beamsplitter(state, "BS1")
    if not detector_d3:
        state = beamsplitter(state, "BS2")
        pops = state.channel_populations()
        return MzResult(state, {d: float(pops[c]) for d, c in DETECTOR_CHANNEL.items()})
    detector = DetectorModel() if detector is None else detector
    state = couple_d3(_apply(MIRRORS, state))
    state = _bs2_unless_absorbed(state)
    if not detector.sdc_connected:
        return MzResult(state, None)
    p = np.abs(state.amplitudes) ** 2
    table = {"D3": float(p[:, 1].sum())}
    table.update({d: float(p[c, 0]) for d, c in DETECTOR_CHANNEL.items()})
    return MzResult(state, table)


def sample_detections(table: dict[str, float], shots: int, seed: int) -> dict[str, int]:
    """Born sampling of which detector fires, one photon per shot."""
    names = sorted(table)
    probs = np.array([table[n] for n in names])
    counts = make_rng(seed).multinomial(shots, probs / probs.sum())
    return {n: int(c) for n, c in zip(names, counts)}
