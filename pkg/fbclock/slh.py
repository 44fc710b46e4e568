# fbclock/slh.py
"""
SLH network algebra restricted to the operator class used by the clock:
constant scattering matrices, collapse operators affine-linear in the mode
annihilators and Hamiltonians made of Kerr, quadratic and linear terms.

The class is closed under series, concatenation and feedback, so every
network in this package reduces to arrays:

    L_i = sum_m C[i, m] m + c_i
    H   = sum_m K_m m^dag^2 m^2 + sum_jk Q[j, k] j^dag k + sum_m (h_m m^dag + h.c.)

Additive real constants produced by normal ordering are dropped.
"""
import logging
from dataclasses import dataclass
from functools import reduce
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from .errors import AlgebraicLoopError, CompositionError
from .models import ClockParams, MeanFieldModel

logger = logging.getLogger("fbclock.slh")

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12
LOOP_TOL = 1e-9

COMPONENT_KINDS = ("drive", "cavity_port", "loss_port", "beamsplitter", "phase", "pad")


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _cjson(values) -> Any:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 0:
        return [float(arr.real), float(arr.imag)]
    return [_cjson(v) for v in arr]


@dataclass(frozen=True, eq=False)
class HamiltonianPoly:
    kerr: np.ndarray    # coefficient of n(n-1) = m^dag^2 m^2 per mode, rad/s
    quad: np.ndarray    # coefficient of j^dag k, hermitian, rad/s
    linear: np.ndarray  # coefficient of m^dag (h.c. implied)

    def __post_init__(self):
        kerr = np.asarray(self.kerr)
        if np.iscomplexobj(kerr) and np.any(np.abs(kerr.imag) > 0):
            raise ValueError("Kerr coefficients must be real")
        kerr = _readonly(np.real(kerr), float)
        quad = np.array(self.quad, dtype=complex)
        linear = _readonly(self.linear, complex)
        m = kerr.size
        if quad.shape != (m, m) or linear.shape != (m,):
            raise ValueError(f"inconsistent Hamiltonian shapes kerr={kerr.shape} "
                             f"quad={quad.shape} linear={linear.shape}")
        scale = max(1.0, float(np.max(np.abs(quad)))) if m else 1.0
        if m and np.max(np.abs(quad - quad.conj().T)) > HERMITIAN_TOL * scale:
            raise ValueError("quadratic Hamiltonian coefficients are not hermitian")
        quad = 0.5 * (quad + quad.conj().T)
        quad.setflags(write=False)
        object.__setattr__(self, "kerr", kerr)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "linear", linear)

    @classmethod
    def zero(cls, n_modes: int) -> "HamiltonianPoly":
        return cls(np.zeros(n_modes), np.zeros((n_modes, n_modes)), np.zeros(n_modes))

    @property
    def n_modes(self) -> int:
        return int(self.kerr.size)

    def __add__(self, other: "HamiltonianPoly") -> "HamiltonianPoly":
        return HamiltonianPoly(self.kerr + other.kerr, self.quad + other.quad,
                               self.linear + other.linear)


@dataclass(frozen=True, eq=False)
class AffineModeOperator:
    coeffs: np.ndarray      # sqrt(rate) per mode
    scalar: complex = 0j    # sqrt(rate) * amplitude

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _readonly(self.coeffs, complex))
        object.__setattr__(self, "scalar", complex(self.scalar))

    def expectation(self, amplitudes: np.ndarray) -> np.ndarray:
        """Coherent-state mean <L> for amplitudes of shape (..., n_modes)."""
        return np.asarray(amplitudes) @ self.coeffs + self.scalar


@dataclass(frozen=True, eq=False)
class SlhTriple:
    modes: Tuple[str, ...]
    S: np.ndarray
    L: Tuple[AffineModeOperator, ...]
    H: HamiltonianPoly

    def __post_init__(self):
        modes = tuple(self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError(f"duplicate mode labels {modes}")
        S = _readonly(self.S, complex)
        L = tuple(self.L)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"scattering matrix must be square, got {S.shape}")
        if len(L) != S.shape[0]:
            raise ValueError(f"{len(L)} collapse operators for {S.shape[0]} ports")
        for op in L:
            if op.coeffs.shape != (len(modes),):
                raise ValueError("collapse operator dimension differs from mode count")
        if self.H.n_modes != len(modes):
            raise ValueError("Hamiltonian dimension differs from mode count")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)

    @property
    def n_ports(self) -> int:
        return int(self.S.shape[0])

    @property
    def coupling_matrix(self) -> np.ndarray:
        if not self.L:
            return np.zeros((0, len(self.modes)), dtype=complex)
        return np.array([op.coeffs for op in self.L])

    @property
    def displacements(self) -> np.ndarray:
        return np.array([op.scalar for op in self.L], dtype=complex)

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        eye = np.eye(self.n_ports)
        return bool(np.max(np.abs(self.S.conj().T @ self.S - eye), initial=0.0) <= tol)

    def allclose(self, other: "SlhTriple", tol: float = 1e-12) -> bool:
        """Coefficient-wise comparison after aligning mode order."""
        if set(self.modes) != set(other.modes) or self.n_ports != other.n_ports:
            return False
        modes = self.modes
        mine, theirs = _aligned(self, modes), _aligned(other, modes)
        return all(np.allclose(a, b, rtol=tol, atol=tol) for a, b in zip(mine, theirs)) \
            and np.allclose(self.S, other.S, rtol=tol, atol=tol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "modes": list(self.modes),
            "n_ports": self.n_ports,
            "S": _cjson(self.S),
            "L": [{"coeffs": _cjson(op.coeffs), "scalar": _cjson(op.scalar)} for op in self.L],
            "H": {
                "kerr": [float(k) for k in self.H.kerr],
                "quad": _cjson(self.H.quad),
                "linear": _cjson(self.H.linear),
            },
        }


def _triple(modes, S, C, c, H: HamiltonianPoly) -> SlhTriple:
    L = tuple(AffineModeOperator(C[i], c[i]) for i in range(len(c)))
    return SlhTriple(tuple(modes), S, L, H)


def _union_modes(*groups: Iterable[str]) -> Tuple[str, ...]:
    out: List[str] = []
    for group in groups:
        for mode in group:
            if mode not in out:
                out.append(mode)
    return tuple(out)


def _aligned(g: SlhTriple, modes: Sequence[str]):
    """Re-index coefficient arrays of g onto the ordered mode list `modes`."""
    idx = [list(modes).index(m) for m in g.modes]
    m = len(modes)
    C = np.zeros((g.n_ports, m), dtype=complex)
    C[:, idx] = g.coupling_matrix
    kerr = np.zeros(m)
    kerr[idx] = g.H.kerr
    quad = np.zeros((m, m), dtype=complex)
    quad[np.ix_(idx, idx)] = g.H.quad
    linear = np.zeros(m, dtype=complex)
    linear[idx] = g.H.linear
    return C, g.displacements, HamiltonianPoly(kerr, quad, linear)


def _hermitian_cross(CA, cA, CB, cB) -> HamiltonianPoly:
    """
    (1/2i) (sum_i A_i^dag B_i - h.c.) for stacked affine operators A, B.
    The result is already normal ordered; its real constant is discarded.
    """
    M = CA.conj().T @ CB        # coefficient of m^dag n
    p = CA.conj().T @ cB        # coefficient of m^dag
    q = CB.T @ cA.conj()        # coefficient of n
    quad = (M - M.conj().T) / 2j
    linear = (p - q.conj()) / 2j
    return HamiltonianPoly(np.zeros(M.shape[0]), quad, linear)


# -------- composition rules --------
def concatenate(g1: SlhTriple, g2: SlhTriple) -> SlhTriple:
    modes = _union_modes(g1.modes, g2.modes)
    C1, c1, H1 = _aligned(g1, modes)
    C2, c2, H2 = _aligned(g2, modes)
    S = block_diag(g1.S, g2.S).astype(complex)
    return _triple(modes, S, np.vstack([C1, C2]), np.concatenate([c1, c2]), H1 + H2)


def series(g2: SlhTriple, g1: SlhTriple) -> SlhTriple:
    """g2 <| g1: the outputs of g1 feed the inputs of g2."""
    if g1.n_ports != g2.n_ports:
        raise CompositionError(f"series product needs equal port counts, "
                               f"got {g2.n_ports} <| {g1.n_ports}")
    modes = _union_modes(g1.modes, g2.modes)
    C1, c1, H1 = _aligned(g1, modes)
    C2, c2, H2 = _aligned(g2, modes)
    S2 = g2.S
    C_in, c_in = S2 @ C1, S2 @ c1
    H = H1 + H2 + _hermitian_cross(C2, c2, C_in, c_in)
    return _triple(modes, S2 @ g1.S, C2 + C_in, c2 + c_in, H)


def feedback_reduce(g: SlhTriple, out_port: int, in_port: int) -> SlhTriple:
    """Connect output `out_port` of g back into its input `in_port`."""
    n = g.n_ports
    if n < 2:
        raise CompositionError("feedback needs a network with at least two ports")
    if not (0 <= out_port < n and 0 <= in_port < n):
        raise CompositionError(f"ports ({out_port}, {in_port}) out of range for {n} ports")
    x, y = out_port, in_port
    S, C, c = g.S, g.coupling_matrix, g.displacements
    s = S[x, y]
    if abs(1.0 - s) <= LOOP_TOL:
        raise AlgebraicLoopError(f"algebraic loop: |1 - S[{x},{y}]| = {abs(1.0 - s):.3e}")
    gain = 1.0 / (1.0 - s)

    rows = [i for i in range(n) if i != x]
    cols = [j for j in range(n) if j != y]
    col_y = S[rows, y]
    row_x = S[x, cols]
    S_new = S[np.ix_(rows, cols)] + gain * np.outer(col_y, row_x)
    C_new = C[rows] + gain * np.outer(col_y, C[x])
    c_new = c[rows] + gain * col_y * c[x]

    loop = gain * S[:, y]
    H = g.H + _hermitian_cross(C, c, np.outer(loop, C[x]), loop * c[x])
    return _triple(g.modes, S_new, C_new, c_new, H)


def chain(*gs: SlhTriple) -> SlhTriple:
    """chain(X, Y, Z) = X <| Y <| Z."""
    return reduce(series, gs)


def concat(*gs: SlhTriple) -> SlhTriple:
    return reduce(concatenate, gs)


# -------- components --------
def make_component(kind: str, **params) -> SlhTriple:
    """
    drive(eps) | cavity_port(mode, kappa, kerr=0, detuning=0) |
    loss_port(mode, kappa) | beamsplitter(eta) | phase(phi) | pad
    """
    if kind == "pad":
        return _triple((), np.eye(1), np.zeros((1, 0)), np.zeros(1), HamiltonianPoly.zero(0))

    if kind == "drive":
        eps = complex(params.get("eps", 0.0))
        return _triple((), np.eye(1), np.zeros((1, 0)), np.array([eps]), HamiltonianPoly.zero(0))

    if kind in ("cavity_port", "loss_port"):
        mode = params["mode"]
        kappa = float(params["kappa"])
        if kappa < 0:
            raise ValueError(f"{kind} rate must be non-negative, got {kappa}")
        kerr = float(params.get("kerr", 0.0)) if kind == "cavity_port" else 0.0
        detuning = float(params.get("detuning", 0.0)) if kind == "cavity_port" else 0.0
        H = HamiltonianPoly([kerr], [[detuning]], [0.0])
        return _triple((mode,), np.eye(1), np.array([[np.sqrt(kappa)]]), np.zeros(1), H)

    if kind == "beamsplitter":
        eta = float(params["eta"])
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"beamsplitter eta must lie in [0, 1], got {eta}")
        t = np.sqrt(1.0 - eta ** 2)
        S = np.array([[t, eta], [-eta, t]])
        return _triple((), S, np.zeros((2, 0)), np.zeros(2), HamiltonianPoly.zero(0))

    if kind == "phase":
        phi = float(params["phi"])
        return _triple((), np.array([[np.exp(1j * phi)]]), np.zeros((1, 0)), np.zeros(1),
                       HamiltonianPoly.zero(0))

    raise ValueError(f"unknown component kind {kind!r}; expected one of {COMPONENT_KINDS}")


def identity(n_ports: int) -> SlhTriple:
    return concat(*[make_component("pad") for _ in range(n_ports)])


def build_clock_network(p: ClockParams) -> SlhTriple:
    """
    Compose the feedback clock from its parts:

        FB{FB{[(BS1 + pad) <| (drive + pad + pad) <| (phi1 + pad + pad) <| (A1 + pad + Aint)]
            + [(pad + BS2 + pad) <| (pad + phi2 + pad + pad) <| (B1 + B2 + pad + Bint)], 0, 3}, 3, 0}

    Output rows: feedback loss at BS1, loss of A, readout port, loss at BS2, loss of B.
    """
    pad = make_component("pad")
    arm_a = chain(
        concat(make_component("beamsplitter", eta=p.eta_1), pad),
        concat(make_component("drive", eps=p.eps), pad, pad),
        concat(make_component("phase", phi=p.phi_1), pad, pad),
        concat(make_component("cavity_port", mode="a", kappa=p.kappa_a1,
                              kerr=p.kerr_a, detuning=p.delta_a),
               pad,
               make_component("loss_port", mode="a", kappa=p.kappa_a_int)),
    )
    arm_b = chain(
        concat(pad, make_component("beamsplitter", eta=p.eta_2), pad),
        concat(pad, make_component("phase", phi=p.phi_2), pad, pad),
        concat(make_component("cavity_port", mode="b", kappa=p.kappa_b1,
                              kerr=p.kerr_b, detuning=p.delta_b),
               make_component("cavity_port", mode="b", kappa=p.kappa_b2),
               pad,
               make_component("loss_port", mode="b", kappa=p.kappa_b_int)),
    )
    network = feedback_reduce(feedback_reduce(concatenate(arm_a, arm_b), 0, 3), 3, 0)
    logger.debug(f"composed clock network: {network.n_ports} ports, modes {network.modes}")
    return network


READOUT_PORT = 2


def readout_operator(g: SlhTriple, port: int = READOUT_PORT) -> AffineModeOperator:
    if not 0 <= port < g.n_ports:
        raise CompositionError(f"port {port} out of range for {g.n_ports} ports")
    return g.L[port]


# -------- mean-field extraction --------
@dataclass(frozen=True, eq=False)
class MeanFieldCoefficients:
    """d alpha = A alpha - 2i K |alpha|^2 alpha + d, one row per mode."""
    modes: Tuple[str, ...]
    drift: np.ndarray
    kerr: np.ndarray
    drive: np.ndarray

    def field(self, amplitudes: np.ndarray) -> np.ndarray:
        amps = np.asarray(amplitudes, dtype=complex)
        return (amps @ self.drift.T - 2j * self.kerr * np.abs(amps) ** 2 * amps + self.drive)


def mean_field_coefficients(g: SlhTriple) -> MeanFieldCoefficients:
    """
    Coherent-state means of the Heisenberg-Langevin flow,
    d alpha_m = -i dH_cl/d alpha_m^* - 1/2 [C^dag (C alpha + c)]_m, with <a^dag a^2> -> alpha |alpha|^2.
    """
    C, c = g.coupling_matrix, g.displacements
    drift = -1j * g.H.quad - 0.5 * C.conj().T @ C
    drive = -1j * g.H.linear - 0.5 * C.conj().T @ c
    return MeanFieldCoefficients(g.modes, drift, g.H.kerr.copy(), drive)


def extract_mean_field(g: SlhTriple, modes: Tuple[str, str] = ("a", "b")) -> MeanFieldModel:
    missing = [m for m in modes if m not in g.modes]
    if missing:
        raise CompositionError(f"network has no mode(s) {missing}")
    coeffs = mean_field_coefficients(g)
    i, j = (g.modes.index(m) for m in modes)
    A, d = coeffs.drift, coeffs.drive
    return MeanFieldModel(
        drift_a=complex(A[i, i]),
        drift_b=complex(A[j, j]),
        coupling_ab=complex(-A[i, j]),
        coupling_ba=complex(-A[j, i]),
        kerr_a=float(coeffs.kerr[i]),
        kerr_b=float(coeffs.kerr[j]),
        drive_b=complex(-d[j]),
        drive_a=complex(-d[i]),
    )


def clock_mean_field(p: ClockParams) -> MeanFieldModel:
    return extract_mean_field(build_clock_network(p))
