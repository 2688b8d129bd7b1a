"""Eigen-selective decoherence of the single-molecule reduced state.

During the waiting time t and the reversion time tau, each eigenbasis
element (zeta, zeta') of the reduced density operator accrues the unitary
phase exp(-i (zeta - zeta') S_zz t) and is damped by two multiplicative
factors selected by the eigenvalue gap:

    G^T(t)   = q(dzeta * t), the reversible line-shape-forming factor,
               where q is the inverse Fourier transform of the normalized
               orientational distribution function (OMDF) p;
    G^R(tau) = exp(-dzeta^2 sigma_cL^2 tau^4 / [8 (kappa+1)^2]), the
               irreversible factor surviving an ideal reversion block.

Diagonal elements (dzeta = 0) are immune, so populations are conserved
(adiabatic regime, no energy exchange with the bath).  The reversion block
is taken as ideal in this engine: no net Hamiltonian phase accrues over
tau, and the tau^4 law is applied to the total block duration.

The total-sample signal of N identical uncorrelated molecules is N times
the single-molecule signal; N enters as a plain multiplicative factor.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MqcnmrError
from .hamiltonian import EigenSystem
from .operators import SpinRegister, collective_angular_momentum
from .sequence import (ExperimentGrid, PropagatorCache, compile_program,
                       default_acquisition, jb_prepare)
from .spectra import CoherenceSpectrum, SignalGrid, detection_matrix, spectral_assembly


class GaussianOMDF:
    """Gaussian orientational distribution, unit integral, width in its own units.

    p(u) = exp(-u^2 / (2 w^2)) / sqrt(2 pi w^2); its inverse transform is
    q(x) = exp(-w^2 x^2 / 2), so G^T is Gaussian in t.
    """

    family = "gaussian"

    def __init__(self, width: float):
        if width <= 0:
            raise ConfigError(f"OMDF width must be positive, got {width}")
        self.width = float(width)

    def p(self, u):
        w = self.width
        return np.exp(-np.asarray(u) ** 2 / (2.0 * w ** 2)) / np.sqrt(2.0 * np.pi * w ** 2)

    def q(self, x):
        return np.exp(-0.5 * (self.width * np.asarray(x)) ** 2)


class TabulatedOMDF:
    """User-tabulated OMDF given as sample points (u, p(u)).

    Normalized to unit integral on load; q(x) is evaluated by trapezoid
    quadrature of p(u) exp(i u x) over the tabulated support.
    """

    family = "tabulated"

    def __init__(self, u: np.ndarray, p: np.ndarray):
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        if u.ndim != 1 or u.shape != p.shape or u.size < 3:
            raise ConfigError("tabulated OMDF needs matching 1D u and p arrays (>= 3 points)")
        if np.any(np.diff(u) <= 0):
            raise ConfigError("tabulated OMDF abscissa must be strictly increasing")
        if np.any(p < 0):
            raise ConfigError("tabulated OMDF must be non-negative")
        area = np.trapezoid(p, u)
        if area <= 0:
            raise ConfigError("tabulated OMDF has zero integral")
        self.u = u
        self.p_values = p / area

    @classmethod
    def from_file(cls, path) -> "TabulatedOMDF":
        table = np.loadtxt(path)
        if table.ndim != 2 or table.shape[1] != 2:
            raise ConfigError(f"OMDF table {path} must have two columns (u, p)")
        return cls(table[:, 0], table[:, 1])

    def p(self, u):
        return np.interp(np.asarray(u), self.u, self.p_values, left=0.0, right=0.0)

    def q(self, x):
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * np.multiply.outer(x, self.u))
        return np.trapezoid(phase * self.p_values, self.u, axis=-1)


@dataclass(frozen=True)
class DecoherenceParams:
    """Open-system model inputs.

    Attributes:
        sigma_cl: coupling-strength scale (s^-1) in the irreversible factor.
        kappa: refocusing-technique constant (2 for the sequences used here).
        omdf: orientational distribution object with p(u) and q(x).
    """

    sigma_cl: float
    omdf: GaussianOMDF | TabulatedOMDF
    kappa: float = 2.0

    def __post_init__(self):
        if self.sigma_cl <= 0:
            raise ConfigError(f"sigma_cl must be positive, got {self.sigma_cl}")
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")


def g_irreversible(dzeta, tau, params: DecoherenceParams):
    """Irreversible decoherence factor exp(-dzeta^2 sigma^2 tau^4 / [8(kappa+1)^2])."""
    dz = np.asarray(dzeta, dtype=float)
    return np.exp(-(dz * params.sigma_cl) ** 2 * float(tau) ** 4
                  / (8.0 * (params.kappa + 1.0) ** 2))


def g_reversible(dzeta, t, params: DecoherenceParams):
    """Reversible line-shape factor q(dzeta * t) from the OMDF transform."""
    return params.omdf.q(np.asarray(dzeta) * np.asarray(t))


def irreversible_decay_time(dzeta: float, params: DecoherenceParams) -> float:
    """tau at which the G^R exponent reaches 1: [8(kappa+1)^2/(dzeta^2 sigma^2)]^(1/4)."""
    if dzeta == 0:
        return np.inf
    return float((8.0 * (params.kappa + 1.0) ** 2
                  / (dzeta ** 2 * params.sigma_cl ** 2)) ** 0.25)


def sigma_for_decay_time(dzeta: float, tau_d: float, kappa: float = 2.0) -> float:
    """sigma_cl that puts the G^R decay time of gap ``dzeta`` at ``tau_d``."""
    if dzeta == 0 or tau_d <= 0:
        raise MqcnmrError("need a nonzero gap and positive decay time")
    return float(np.sqrt(8.0) * (kappa + 1.0) / (abs(dzeta) * tau_d ** 2))


@dataclass(frozen=True)
class ReducedState:
    """Reduced density matrix elements in the simultaneous (H, I_z) eigenbasis."""

    matrix: np.ndarray
    eig: EigenSystem

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=complex)
        if a.shape != (self.eig.dim, self.eig.dim):
            raise MqcnmrError(f"state shape {a.shape} does not match eigensystem dim {self.eig.dim}")
        herm = np.max(np.abs(a - a.conj().T))
        if herm > 1e-10 * max(np.max(np.abs(a)), 1e-300):
            raise MqcnmrError(f"reduced state is not hermitian (error {herm:.3e})")
        a.flags.writeable = False
        object.__setattr__(self, "matrix", a)

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real


def prepare_reduced_state(eig: EigenSystem, reg: SpinRegister, t_p: float) -> ReducedState:
    """Single-molecule state right after the JB preparation, in the eigenbasis."""
    cache = PropagatorCache(eig, reg)
    prep = compile_program(jb_prepare(t_p), cache)
    iz = collective_angular_momentum(reg, "z").entries
    rho = prep @ iz @ prep.conj().T
    return ReducedState(eig.vectors.conj().T @ rho @ eig.vectors, eig)


def evolve_open(state: ReducedState, t: float, tau: float,
                params: DecoherenceParams) -> ReducedState:
    """Apply the open-system map for waiting time t and reversion time tau.

    Element (a, b) is multiplied by
    exp(-i (zeta_a - zeta_b) S_zz t) * G^T(t) * G^R(tau); hermiticity and
    the diagonal are preserved exactly.
    """
    eig = state.eig
    gaps = eig.gaps()
    factor = (np.exp(-1j * eig.order_parameter * gaps * t)
              * g_reversible(gaps, t, params)
              * g_irreversible(gaps, tau, params))
    return ReducedState(state.matrix * factor, eig)


def run_grid_open(eig: EigenSystem, reg: SpinRegister, grid: ExperimentGrid,
                  params: DecoherenceParams, acquisition=None,
                  n_molecules: int = 1, workers: int = 1) -> SignalGrid:
    """Open-engine analog of ``sequence.run_grid``.

    The reversion block is ideal by assumption, so tau enters only through
    G^R; the waiting time t carries the eigenbasis phases and G^T.
    """
    if acquisition is None:
        acquisition = default_acquisition(eig, reg, grid.t_p)
    state = prepare_reduced_state(eig, reg, grid.t_p)
    det = detection_matrix(eig, reg, acquisition.t_m, acquisition.window)
    nu = -eig.coherence_orders()
    n_orders = 2 * reg.n_spins + 1
    nu_labels = (nu + reg.n_spins).ravel()
    gaps = eig.gaps()
    phase_base = -1j * eig.order_parameter * gaps

    ts = grid.ts
    gt = np.empty((grid.n_t, reg.dim, reg.dim), dtype=complex)
    for j, t in enumerate(ts):
        gt[j] = np.exp(phase_base * t) * g_reversible(gaps, t, params)

    def one_tau(tau):
        a_tau = state.matrix * g_irreversible(gaps, tau, params)
        coeffs = np.zeros((grid.n_t, n_orders), dtype=complex)
        for j in range(grid.n_t):
            terms = (det * (a_tau * gt[j]).T).ravel()
            coeffs[j] = (np.bincount(nu_labels, weights=terms.real, minlength=n_orders)
                         + 1j * np.bincount(nu_labels, weights=terms.imag, minlength=n_orders))
        return coeffs

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            slabs = list(pool.map(one_tau, grid.taus))
    else:
        slabs = [one_tau(tau) for tau in grid.taus]

    nus = np.arange(-reg.n_spins, reg.n_spins + 1)
    encoder = np.exp(1j * np.outer(grid.phis, nus))
    data = np.empty((grid.n_phi, grid.n_t, len(grid.taus)), dtype=complex)
    for k, coeffs in enumerate(slabs):
        data[:, :, k] = n_molecules * (encoder @ coeffs.T)

    return SignalGrid(data=data, dt=grid.dt, taus=np.asarray(grid.taus, dtype=float),
                      t_p=grid.t_p, t_m=acquisition.t_m, window=acquisition.window)


def synthesize_spectrum(state: ReducedState, reg: SpinRegister, order: int,
                        ts: np.ndarray, t_m: float, window: float,
                        params: DecoherenceParams | None = None,
                        taus=None, n_molecules: int = 1) -> CoherenceSpectrum:
    """Coherence spectra built from eigenpair contributions (shifted OMDF copies).

    Wraps ``spectra.spectral_assembly`` with this module's decoherence
    factors and returns the spectra restricted to one coherence order
    (``order``); pass the same discrete t grid as the time-domain route to
    compare them within rounding.
    """
    if not -reg.n_spins <= order <= reg.n_spins:
        raise MqcnmrError(f"coherence order {order} outside [-{reg.n_spins}, {reg.n_spins}]")
    if params is None:
        g_rev = g_irr = None
    else:
        g_rev = lambda dz, t: g_reversible(dz, t, params)
        g_irr = lambda dz, tau: g_irreversible(dz, tau, params)
    full = spectral_assembly(state.matrix, state.eig, reg, ts, t_m, window,
                             g_reversible=g_rev, g_irreversible=g_irr,
                             taus=taus, n_molecules=n_molecules)
    i = full.order_index(order)
    return CoherenceSpectrum(data=full.data[:, i:i + 1, :], mu=full.mu[i:i + 1],
                             freqs_hz=full.freqs_hz, taus=full.taus,
                             meta={**full.meta, "order": order})
