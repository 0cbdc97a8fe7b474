"""Spin-phase evolution of the rotating crystal under a pulse schedule.

Every ion sees a scalar drive f_j(t) (a Z-rotation rate): per segment,

    f_j(t) = U * sum_{mu in comb} cos(delta(rho_j, phi_j - omega t) - mu t + psi)

and accumulates theta_j = 2 * integral of f_j over the schedule.  Because the
Hamiltonian is diagonal in Z, everything reduces to per-ion phase integrals;
<sigma_X> = cos theta, <sigma_Y> = sin theta (theta > 0 turns +X toward +Y),
and the infidelity against a target Z-rotation theta* is sin^2((theta-theta*)/2).

Three independent evaluation routes, kept deliberately separate so they can
cross-check each other:

  evolve_exact         panelized Gauss-Legendre quadrature of f_j(t) with
                       node doubling until the phase converges
  evolve_exact_bessel  closed-form term-by-term time integrals of the
                       Jacobi-Anger expansion (single even-component
                       segments only) -- the analytic oracle
  evolve_rwa           static (secular) terms only: the full Bessel-product
                       sum for serial schedules, the first-order-in-amplitude
                       form for parallel ones
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .crystal import IonCrystal
from .errors import QuadratureError
from .patterns import TargetPattern
from .planner import PulseSchedule, PulseSegment, schedule_hash
from .specfun import bessel_j

_BASE_NODES = 24
_MAX_NODES = 3072
_ROUNDOFF_MASS_FACTOR = 128  # eps multiples per radian of integrand L1 mass
_PRODUCT_TAIL = 1e-18
_MAX_PRODUCT_ORDERS = 3


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    theta: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    metadata: dict
    theta_target: np.ndarray | None = None
    infidelity: np.ndarray | None = None

    def __post_init__(self) -> None:
        norm = self.sigma_x**2 + self.sigma_y**2
        if np.max(np.abs(norm - 1.0)) > 1e-12:
            raise ValueError("Bloch vector left the equator: sigma_x^2 + sigma_y^2 != 1")

    def with_targets(self, theta_target: np.ndarray) -> "EvolutionResult":
        theta_target = np.asarray(theta_target, dtype=float)
        if theta_target.shape != self.theta.shape:
            raise ValueError("target phase array shape mismatch")
        return replace(
            self,
            theta_target=theta_target,
            infidelity=infidelity(self.theta, theta_target),
        )

    @property
    def max_infidelity(self) -> float:
        if self.infidelity is None:
            raise ValueError("no targets attached; call with_targets first")
        return float(np.max(self.infidelity))


def _result(theta: np.ndarray, metadata: dict) -> EvolutionResult:
    return EvolutionResult(
        theta=theta, sigma_x=np.cos(theta), sigma_y=np.sin(theta), metadata=metadata
    )


def infidelity(theta, theta_target):
    """1 - |<target|state>|^2 for two Z-rotations of |+>."""
    return np.sin(0.5 * (np.asarray(theta) - np.asarray(theta_target))) ** 2


def target_phases(
    crystal: IonCrystal, pattern: TargetPattern, u_rad_s: float, t_total_s: float
) -> np.ndarray:
    """Ideal rotation angles theta*_j = 2 U F(rho_j, phi_j) T."""
    return 2.0 * u_rad_s * pattern.evaluate(crystal.rho, crystal.phi) * t_total_s


def target_phases_from_expansion(crystal: IonCrystal, exp, u_rad_s: float, t_total_s: float):
    """Same, but against the band-limited reconstruction F-tilde."""
    return 2.0 * u_rad_s * exp.reconstruct(crystal.rho, crystal.phi) * t_total_s


# ---------------------------------------------------------------------------
# segment bookkeeping


def _segment_tables(segment: PulseSegment, rho: np.ndarray):
    """Evaluate the deformation's radial parts at the ion radii once.

    Returns (delta0, orders, even, odd): the static m=0 offset (J,), the
    rotating orders, and per-order (J,) arrays (zeros where a parity is
    absent).
    """
    n = rho.size
    delta0 = np.zeros(n)
    orders: list[int] = []
    even: list[np.ndarray] = []
    odd: list[np.ndarray] = []
    for comp in segment.deformation.components:
        e = np.asarray(comp.even(rho), dtype=float) if comp.even is not None else np.zeros(n)
        o = np.asarray(comp.odd(rho), dtype=float) if comp.odd is not None else np.zeros(n)
        if comp.m == 0:
            delta0 = delta0 + e
        else:
            orders.append(comp.m)
            even.append(e)
            odd.append(o)
    return delta0, orders, even, odd


def instantaneous_coefficient(
    segment: PulseSegment, rho: float, phi: float, omega_rad_s: float, t
) -> np.ndarray | float:
    """Drive rate f_j(t) in rad/s for one ion at rotating-frame (rho, phi)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-18) or np.any(t_arr > segment.duration_s * (1 + 1e-12)):
        raise ValueError("time outside the segment's duration")
    rho_arr = np.asarray([float(rho)])
    delta0, orders, even, odd = _segment_tables(segment, rho_arr)
    beta = float(phi) - omega_rad_s * t_arr
    delta = np.full(t_arr.shape, delta0[0])
    for m, e, o in zip(orders, even, odd):
        delta = delta + e[0] * np.cos(m * beta) + o[0] * np.sin(m * beta)
    f = np.zeros(t_arr.shape)
    for mult in segment.beatnotes:
        f = f + np.cos(delta - mult * omega_rad_s * t_arr + segment.psi)
    f = segment.u_rad_s * f
    return float(f) if np.ndim(t) == 0 else f


# ---------------------------------------------------------------------------
# exact route 1: panelized quadrature


def _segment_phase_quadrature(
    segment: PulseSegment,
    crystal: IonCrystal,
    omega: float,
    abs_tol: float,
    node_block: int = 32768,
) -> np.ndarray:
    """2 * integral of f_j dt for one segment, all ions, by Gauss-Legendre
    panels with node doubling.  Panels are aligned to the fastest beatnote
    period so each panel holds a bounded number of oscillations.

    Convergence is per ion: |fine - coarse| below abs_tol/2 plus a
    roundoff allowance proportional to the integral's accumulated |f|
    mass -- long segments carry hundreds of radians of L1 mass whose
    float64 summation noise no amount of node refinement removes."""
    delta0, orders, even, odd = _segment_tables(segment, crystal.rho)
    fastest = max([*segment.beatnotes, *orders], default=0)
    duration = segment.duration_s
    if fastest == 0:
        # drive is strictly time-independent: f * T, no quadrature needed
        f0 = segment.u_rad_s * len(segment.beatnotes) * np.cos(delta0 + segment.psi)
        return 2.0 * f0 * duration

    n_panels = max(1, int(np.ceil(duration * omega * fastest / (2.0 * np.pi))))
    edges = np.linspace(0.0, duration, n_panels + 1)

    phi = crystal.phi
    even_m = np.array(even) if orders else np.zeros((0, phi.size))
    odd_m = np.array(odd) if orders else np.zeros((0, phi.size))
    ms = np.array(orders, dtype=float)

    def integrate(nodes_per_panel: int):
        x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
        # map the reference nodes into every panel: (n_panels * nodes,)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel()
        total = np.zeros(phi.size)
        mass = np.zeros(phi.size)
        for start in range(0, t.size, node_block):
            tb = t[start : start + node_block]
            wb = wt[start : start + node_block]
            beta = phi[:, None] - omega * tb[None, :]  # (J, B)
            delta = delta0[:, None] + np.zeros_like(beta)
            for i in range(ms.size):
                delta += even_m[i][:, None] * np.cos(ms[i] * beta)
                delta += odd_m[i][:, None] * np.sin(ms[i] * beta)
            f = np.zeros_like(beta)
            for mult in segment.beatnotes:
                f += np.cos(delta - (mult * omega) * tb[None, :] + segment.psi)
            total += (f * wb[None, :]).sum(axis=1)
            mass += (np.abs(f) * wb[None, :]).sum(axis=1)
        return 2.0 * segment.u_rad_s * total, 2.0 * segment.u_rad_s * mass

    nodes = _BASE_NODES
    coarse, _ = integrate(nodes)
    while True:
        nodes *= 2
        fine, mass = integrate(nodes)
        allowance = 0.5 * abs_tol + _ROUNDOFF_MASS_FACTOR * np.finfo(float).eps * mass
        if np.all(np.abs(fine - coarse) < allowance):
            return fine
        if nodes >= _MAX_NODES:
            raise QuadratureError(
                f"phase integral did not converge to {abs_tol:g} with "
                f"{nodes} nodes per panel ({n_panels} panels)"
            )
        coarse = fine


def evolve_exact(
    crystal: IonCrystal,
    schedule: PulseSchedule,
    tol: float = 1e-12,
    threads: int = 1,
) -> EvolutionResult:
    """Direct time integration of the drive for every ion.

    `tol` is the absolute tolerance on each segment's phase contribution
    (theta units).  `threads` distributes segments across a thread pool;
    the result is independent of the thread count because segments are
    integrated independently and summed in schedule order.
    """
    if tol < 1e-13:
        raise ValueError("tolerance below 1e-13 is not resolvable in float64")
    omega = schedule.omega_rad_s
    per_segment_tol = tol

    if threads > 1 and len(schedule.segments) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            phases = list(
                pool.map(
                    lambda seg: _segment_phase_quadrature(seg, crystal, omega, per_segment_tol),
                    schedule.segments,
                )
            )
    else:
        phases = [
            _segment_phase_quadrature(seg, crystal, omega, per_segment_tol)
            for seg in schedule.segments
        ]
    theta = np.zeros(len(crystal))
    for p in phases:  # fixed order: deterministic accumulation
        theta = theta + p
    meta = {
        "method": "exact-quadrature",
        "tolerance": tol,
        "schedule_hash": schedule_hash(schedule),
    }
    return _result(theta, meta)


# ---------------------------------------------------------------------------
# exact route 2: term-by-term integrals of the Jacobi-Anger expansion


def _bessel_series_phase(
    segment: PulseSegment, crystal: IonCrystal, omega: float, n_terms: int
) -> np.ndarray:
    """Closed-form phase for one single-even-component segment.

    Expanding cos(delta cos(m beta) - m omega t + psi) in harmonics gives
    f = U sum_n J_n(delta) cos(n m phi + psi + n pi/2 - (n+1) m omega t);
    the n = -1 term is static and every other term integrates to
    2 sin(x)/((n+1) m omega) * cos(...) with x = (n+1) m omega T / 2.
    """
    delta0, orders, even, odd = _segment_tables(segment, crystal.rho)
    if len(orders) + (1 if np.any(delta0) else 0) != 1 or any(np.any(o) for o in odd):
        raise ValueError(
            "oracle inapplicable: needs exactly one even azimuthal component per segment"
        )
    if len(segment.beatnotes) != 1:
        raise ValueError("oracle inapplicable: needs exactly one beatnote per segment")
    mult = segment.beatnotes[0]
    u, psi, T = segment.u_rad_s, segment.psi, segment.duration_s

    if not orders:
        if mult != 0:
            raise ValueError("oracle inapplicable: static deformation needs beatnote 0")
        return 2.0 * u * np.cos(delta0 + psi) * T

    m = orders[0]
    if mult != m:
        raise ValueError(f"oracle inapplicable: beatnote {mult} != deformation order {m}")
    delta = even[0]
    phi = crystal.phi

    phase = u * bessel_j(1, delta) * np.sin(m * phi - psi) * T  # n = -1
    for n in range(-n_terms, n_terms + 1):
        if n == -1:
            continue
        a = (n + 1) * m * omega
        x = 0.5 * a * T
        phase = phase + (
            2.0 * u * bessel_j(n, delta) * np.sin(x) / a
        ) * np.cos(n * m * phi + psi + n * np.pi / 2.0 - x)
    return 2.0 * phase


def evolve_exact_bessel(
    crystal: IonCrystal, schedule: PulseSchedule, n_terms: int = 24
) -> EvolutionResult:
    """Analytic phase series; the independent oracle for evolve_exact.

    Only applicable when every segment carries a single even component
    driven at its own order (or a static m=0 segment); raises ValueError
    ("oracle inapplicable") otherwise.  With arguments |delta| <= 3 the
    neglected tail |J_n| <= (delta/2)^n / n! is below 1e-16 long before
    the default 24 terms.
    """
    if n_terms < 8:
        raise ValueError("n_terms >= 8 required for a meaningful tail")
    omega = schedule.omega_rad_s
    theta = np.zeros(len(crystal))
    for seg in schedule.segments:
        theta = theta + _bessel_series_phase(seg, crystal, omega, n_terms)
    meta = {
        "method": "exact-bessel",
        "n_terms": n_terms,
        "schedule_hash": schedule_hash(schedule),
    }
    return _result(theta, meta)


# ---------------------------------------------------------------------------
# RWA route: static terms only


def _tail_order(r_max: float, floor: float = _PRODUCT_TAIL) -> int:
    """Smallest K with (r/2)^K / K! below floor (Bessel tail bound)."""
    k, term = 0, 1.0
    half = 0.5 * max(r_max, 1e-30)
    while term > floor and k < 80:
        k += 1
        term *= half / k
    return max(k, 2)


def _static_coefficient_serial(segment: PulseSegment, crystal: IonCrystal) -> np.ndarray:
    """Exact secular drive rate for an arbitrary (<= 3 rotating orders)
    deformation: the multi-order Bessel-product sum.

    Combining each order's parities into R cos(m beta - chi) and expanding,
    a term is static exactly when sum_i k_i m_i = -mu/omega; its weight is
    prod_i J_{k_i}(R_i) with phase psi + delta0 - mult phi - sum k_i chi_i
    + (sum k_i) pi/2.
    """
    delta0, orders, even, odd = _segment_tables(segment, crystal.rho)
    phi = crystal.phi
    u, psi = segment.u_rad_s, segment.psi

    if not orders:
        coeff = np.zeros(len(crystal))
        for mult in segment.beatnotes:
            if mult == 0:
                coeff = coeff + u * np.cos(delta0 + psi)
        return coeff

    if len(orders) > _MAX_PRODUCT_ORDERS:
        raise ValueError(
            f"static product sum supports at most {_MAX_PRODUCT_ORDERS} rotating orders, "
            f"got {len(orders)}"
        )

    R = [np.hypot(e, o) for e, o in zip(even, odd)]
    chi = [np.arctan2(o, e) for e, o in zip(even, odd)]
    k_caps = [_tail_order(float(np.max(r))) for r in R]

    # cache J_k(R_i) for the needed k range
    jcache = []
    for r, cap in zip(R, k_caps):
        jcache.append({k: bessel_j(k, r) for k in range(-cap, cap + 1)})

    coeff = np.zeros(len(crystal))
    for mult in segment.beatnotes:
        for ks in _constrained_indices(orders, k_caps, -mult):
            weight = np.ones(len(crystal))
            phase = psi + delta0 - mult * phi + (sum(ks) * np.pi / 2.0)
            for i, k in enumerate(ks):
                weight = weight * jcache[i][k]
                phase = phase - k * chi[i]
            coeff = coeff + u * weight * np.cos(phase)
    return coeff


def _constrained_indices(orders, caps, total):
    """All (k_1..k_p) with |k_i| <= caps[i] and sum k_i * orders[i] == total."""
    if len(orders) == 1:
        m = orders[0]
        if total % m == 0 and abs(total // m) <= caps[0]:
            yield (total // m,)
        return
    m0, cap0 = orders[0], caps[0]
    for k0 in range(-cap0, cap0 + 1):
        for rest in _constrained_indices(orders[1:], caps[1:], total - k0 * m0):
            yield (k0, *rest)


def _static_coefficient_parallel(segment: PulseSegment, crystal: IonCrystal) -> np.ndarray:
    """First-order-in-amplitude secular rate for a parallel segment: the
    beatnote at m omega picks out the order-m deformation component."""
    delta0, orders, even, odd = _segment_tables(segment, crystal.rho)
    phi = crystal.phi
    u, psi = segment.u_rad_s, segment.psi
    coeff = np.zeros(len(crystal))
    by_order = {m: (e, o) for m, e, o in zip(orders, even, odd)}
    for mult in segment.beatnotes:
        if mult == 0:
            coeff = coeff + u * np.cos(delta0 + psi)
        elif mult in by_order:
            e, o = by_order[mult]
            coeff = coeff + 0.5 * u * (
                e * np.sin(mult * phi - psi) - o * np.cos(mult * phi - psi)
            )
    return coeff


def evolve_rwa(crystal: IonCrystal, schedule: PulseSchedule) -> EvolutionResult:
    """Keep only the static terms of every segment's drive.

    Serial schedules get the exact secular term (all Bessel-product
    combinations); parallel schedules get the first-order form that the
    protocol is designed around.
    """
    theta = np.zeros(len(crystal))
    static = (
        _static_coefficient_parallel
        if schedule.mode == "parallel"
        else _static_coefficient_serial
    )
    for seg in schedule.segments:
        theta = theta + 2.0 * static(seg, crystal) * seg.duration_s
    meta = {"method": "rwa", "schedule_hash": schedule_hash(schedule)}
    return _result(theta, meta)


# ---------------------------------------------------------------------------
# export


def write_evolution_csv(
    result: EvolutionResult, crystal: IonCrystal, path: str | Path
) -> None:
    """CSV (ion_index, rho, phi, theta, sigma_x, sigma_y, theta_target,
    infidelity) plus a .json sidecar with the run metadata."""
    path = Path(path)
    tt = result.theta_target
    inf = result.infidelity
    with path.open("w") as fh:
        fh.write("ion_index,rho,phi,theta,sigma_x,sigma_y,theta_target,infidelity\n")
        for j in range(len(crystal)):
            tt_s = "" if tt is None else f"{tt[j]:.17g}"
            inf_s = "" if inf is None else f"{inf[j]:.17g}"
            fh.write(
                f"{j},{float(crystal.rho[j]):.17g},{float(crystal.phi[j]):.17g},"
                f"{result.theta[j]:.17g},{result.sigma_x[j]:.17g},"
                f"{result.sigma_y[j]:.17g},{tt_s},{inf_s}\n"
            )
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(result.metadata, indent=2, sort_keys=True) + "\n")


def max_infidelity(result: EvolutionResult) -> float:
    return result.max_infidelity
