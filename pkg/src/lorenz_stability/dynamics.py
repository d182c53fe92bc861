"""Lorenz63 vector field and an adaptive Dormand-Prince integrator.

States are handled as ``(..., 3)`` float arrays in ``(x, y, z)`` order. The
integrator works on plain Python floats internally; for a 3-component system
this is several times faster than going through numpy per stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, NonFiniteState

__all__ = [
    "SystemParams",
    "Trajectory",
    "rhs",
    "integrate",
    "fixed_points",
    "DEFAULT_DT",
    "DEFAULT_N_POINTS",
]

DEFAULT_DT = 0.01
DEFAULT_N_POINTS = 4000

ATOL = 1e-9
RTOL = 1e-9
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# PI controller exponents for a 5th-order pair (beta = 0.04, alpha = 1/5 - 0.75 beta)
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
MAX_STEPS = 10_000_000
# keeps h * |eigenvalue| inside the stability region near equilibria, where the
# error estimate alone would let the step grow without bound
MAX_STEP = 0.05


@dataclass(frozen=True)
class SystemParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        for name in ("sigma", "rho", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidConfig(f"{name} must be finite, got {value!r}")

    def as_dict(self) -> dict:
        return {"sigma": self.sigma, "rho": self.rho, "beta": self.beta}


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled Lorenz trajectory.

    ``states`` and ``derivatives`` are ``(n_points, 3)`` arrays; row ``i`` is
    the solution at ``t = i * dt``. Derivatives are always recomputed from the
    states with :func:`rhs`.
    """

    params: SystemParams
    dt: float
    initial: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt


def rhs(state, params: SystemParams = SystemParams()) -> np.ndarray:
    """Lorenz63 time derivative of ``state`` (any shape ending in 3)."""
    s = np.asarray(state, dtype=np.float64)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    dx = params.sigma * (y - x)
    dy = x * (params.rho - z) - y
    dz = x * y - params.beta * z
    return np.stack([dx, dy, dz], axis=-1)


def fixed_points(params: SystemParams = SystemParams()) -> np.ndarray:
    """The origin and, for rho > 1, the two symmetric equilibria C+ and C-."""
    points = [(0.0, 0.0, 0.0)]
    if params.rho > 1:
        r = math.sqrt(params.beta * (params.rho - 1))
        points += [(r, r, params.rho - 1), (-r, -r, params.rho - 1)]
    return np.array(points)


def _f(x, y, z, sigma, rho, beta):
    return sigma * (y - x), x * (rho - z) - y, x * y - beta * z


# Dormand-Prince 5(4) tableau
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error coefficients: 5th order weights minus embedded 4th order weights
_E1 = 71 / 57600
_E3 = -71 / 16695
_E4 = 71 / 1920
_E5 = -17253 / 339200
_E6 = 22 / 525
_E7 = -1 / 40
# continuous extension (Hairer & Wanner, dopri5 contd5)
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423


def _initial_step(y, f0, sigma, rho, beta, t_span):
    # Hairer's starting-step heuristic for a 5th-order method
    sc = [ATOL + RTOL * abs(v) for v in y]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y, sc)) / 3)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, sc)) / 3)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_span)
    y1 = [a + h0 * b for a, b in zip(y, f0)]
    f1 = _f(*y1, sigma, rho, beta)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, sc)) / 3) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_span, MAX_STEP)


def integrate(
    initial,
    params: SystemParams = SystemParams(),
    dt: float = DEFAULT_DT,
    n_points: int = DEFAULT_N_POINTS,
) -> Trajectory:
    """Integrate from ``initial`` and sample the solution at ``i * dt``.

    Internal steps are chosen adaptively (Dormand-Prince 5(4), PI step-size
    control, atol = rtol = 1e-9); output points that fall inside a step are
    filled with the method's 4th-order continuous extension.

    Raises
    ------
    NonFiniteState
        If the solution overflows or becomes NaN.
    """
    if not dt > 0:
        raise InvalidConfig(f"dt must be positive, got {dt!r}")
    if n_points < 1:
        raise InvalidConfig(f"n_points must be >= 1, got {n_points!r}")
    y0 = np.asarray(initial, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState(f"non-finite initial state {y0}")

    sigma, rho, beta = params.sigma, params.rho, params.beta
    out = np.empty((n_points, 3))
    out[0] = y0
    t_end = (n_points - 1) * dt

    x, y, z = float(y0[0]), float(y0[1]), float(y0[2])
    k1 = _f(x, y, z, sigma, rho, beta)
    t = 0.0
    h = _initial_step((x, y, z), k1, sigma, rho, beta, t_end) if n_points > 1 else 0.0
    err_prev = 1e-4
    rejected = False
    nxt = 1
    steps = 0

    while nxt < n_points:
        steps += 1
        if steps > MAX_STEPS:
            raise NonFiniteState("step budget exhausted; solution is likely unbounded")
        if t + h > t_end:
            h = t_end - t
        if h <= 1e-14 * max(1.0, abs(t)):
            raise NonFiniteState(f"step size underflow at t={t}")

        k1x, k1y, k1z = k1
        k2 = _f(x + h * _A21 * k1x, y + h * _A21 * k1y, z + h * _A21 * k1z, sigma, rho, beta)
        k2x, k2y, k2z = k2
        k3 = _f(
            x + h * (_A31 * k1x + _A32 * k2x),
            y + h * (_A31 * k1y + _A32 * k2y),
            z + h * (_A31 * k1z + _A32 * k2z),
            sigma, rho, beta,
        )
        k3x, k3y, k3z = k3
        k4 = _f(
            x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x),
            y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y),
            z + h * (_A41 * k1z + _A42 * k2z + _A43 * k3z),
            sigma, rho, beta,
        )
        k4x, k4y, k4z = k4
        k5 = _f(
            x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x),
            y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y),
            z + h * (_A51 * k1z + _A52 * k2z + _A53 * k3z + _A54 * k4z),
            sigma, rho, beta,
        )
        k5x, k5y, k5z = k5
        k6 = _f(
            x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x),
            y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y),
            z + h * (_A61 * k1z + _A62 * k2z + _A63 * k3z + _A64 * k4z + _A65 * k5z),
            sigma, rho, beta,
        )
        k6x, k6y, k6z = k6
        xn = x + h * (_A71 * k1x + _A73 * k3x + _A74 * k4x + _A75 * k5x + _A76 * k6x)
        yn = y + h * (_A71 * k1y + _A73 * k3y + _A74 * k4y + _A75 * k5y + _A76 * k6y)
        zn = z + h * (_A71 * k1z + _A73 * k3z + _A74 * k4z + _A75 * k5z + _A76 * k6z)
        k7 = _f(xn, yn, zn, sigma, rho, beta)
        k7x, k7y, k7z = k7

        ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
        ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        ez = h * (_E1 * k1z + _E3 * k3z + _E4 * k4z + _E5 * k5z + _E6 * k6z + _E7 * k7z)
        err = math.sqrt(
            (
                (ex / (ATOL + RTOL * max(abs(x), abs(xn)))) ** 2
                + (ey / (ATOL + RTOL * max(abs(y), abs(yn)))) ** 2
                + (ez / (ATOL + RTOL * max(abs(z), abs(zn)))) ** 2
            )
            / 3
        )
        if not math.isfinite(err) or not (
            math.isfinite(xn) and math.isfinite(yn) and math.isfinite(zn)
        ):
            if abs(h) < 1e-10:
                raise NonFiniteState(f"non-finite state near t={t}")
            h *= MIN_FACTOR
            rejected = True
            continue

        if err <= 1.0:
            t_new = t + h
            # dense output for every grid point in (t, t_new]
            while nxt < n_points and nxt * dt <= t_new + 1e-12 * dt:
                t_out = nxt * dt
                if t_out >= t_new:
                    out[nxt] = (xn, yn, zn)
                else:
                    th = (t_out - t) / h
                    th1 = 1.0 - th
                    for i, (y_old, y_new, a1, a3, a4, a5, a6, a7) in enumerate(
                        (
                            (x, xn, k1x, k3x, k4x, k5x, k6x, k7x),
                            (y, yn, k1y, k3y, k4y, k5y, k6y, k7y),
                            (z, zn, k1z, k3z, k4z, k5z, k6z, k7z),
                        )
                    ):
                        diff = y_new - y_old
                        bspl = h * a1 - diff
                        r4 = diff - h * a7 - bspl
                        r5 = h * (_D1 * a1 + _D3 * a3 + _D4 * a4 + _D5 * a5 + _D6 * a6 + _D7 * a7)
                        out[nxt, i] = y_old + th * (diff + th1 * (bspl + th * (r4 + th1 * r5)))
                nxt += 1
            x, y, z = xn, yn, zn
            k1 = k7
            t = t_new
            err = max(err, 1e-10)
            factor = SAFETY * err ** (-PI_ALPHA) * err_prev ** PI_BETA
            factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if rejected:
                factor = min(factor, 1.0)
            h = min(h * factor, MAX_STEP)
            err_prev = err
            rejected = False
        else:
            factor = max(MIN_FACTOR, SAFETY * err ** (-PI_ALPHA))
            h *= factor
            rejected = True

    if not np.all(np.isfinite(out)):
        raise NonFiniteState("trajectory contains non-finite values")
    return Trajectory(
        params=params,
        dt=float(dt),
        initial=y0.copy(),
        states=out,
        derivatives=rhs(out, params),
    )
