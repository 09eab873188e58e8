"""Reproducible random batteries of weights and test functions.

All randomness flows through a counter-based Philox generator keyed by a
user seed, so batteries are bit-reproducible and portable; every
generated object carries a descriptive id.
"""

from __future__ import annotations

import numpy as np

from .dyadic import Cube
from .grid import GridFunction
from .weight import MatrixWeight, blm_is_a2

__all__ = [
    "rng_for",
    "blm_gamma_grid",
    "blm_a2_battery",
    "random_power_weights",
    "random_scalar_power_weights",
    "function_battery",
]


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator; (seed, stream) fully determines the sequence."""
    return np.random.Generator(np.random.Philox(key=seed, counter=stream))


def blm_gamma_grid(d: int, size: int = 5):
    """(gamma_11, gamma_22) grid spanning inside and outside the
    admissible open interval (-d, d); off-diagonal set to the mean, so
    membership is decided purely by the diagonal range."""
    vals = np.linspace(-1.5 * d, 1.5 * d, size)
    out = []
    for g11 in vals:
        for g22 in vals:
            g12 = 0.5 * (g11 + g22)
            gammas = np.array([[g11, g12], [g12, g22]])
            out.append(gammas)
    return out


_BLM_A = np.array([[2.0, 1.0], [1.0, 2.0]])


def blm_a2_battery(d: int, size: int = 5, variant: str = "radial"):
    """The admissible members of the gamma grid as 2x2 power weights."""
    out = []
    for gammas in blm_gamma_grid(d, size):
        if blm_is_a2(_BLM_A, gammas, variant, d):
            kind = "power_radial" if variant == "radial" else "power_axis"
            g = gammas if variant == "radial" else np.broadcast_to(
                gammas / d, (d, 2, 2)
            ).copy()
            out.append(MatrixWeight(
                kind, d, 2, matrix=_BLM_A, gamma=g,
                weight_id=f"blm-{variant}-{gammas[0,0]:+.2f}"
                          f"{gammas[1,1]:+.2f}",
            ))
    return out


def random_power_weights(count: int, d: int, n: int, seed: int,
                         margin: float = 0.25):
    """Random admissible radial power weights: diagonal exponents drawn
    from (-d(1-margin), d(1-margin)), off-diagonals set to means, frame
    matrix a random well-conditioned PSD matrix."""
    rng = rng_for(seed, stream=1)
    out = []
    for k in range(count):
        gdiag = rng.uniform(-d * (1 - margin), d * (1 - margin), size=n)
        gammas = 0.5 * (gdiag[:, None] + gdiag[None, :])
        B = rng.standard_normal((n, n))
        A = B @ B.T + n * np.eye(n)
        out.append(MatrixWeight(
            "power_radial", d, n, matrix=A, gamma=gammas,
            weight_id=f"rand-power-{seed}-{k}",
        ))
    return out


def random_scalar_power_weights(count: int, d: int, seed: int,
                                margin: float = 0.25):
    """n=1 weights w(x) = a |x|^gamma with gamma in the A_2 range."""
    rng = rng_for(seed, stream=2)
    out = []
    for k in range(count):
        gamma = float(rng.uniform(-d * (1 - margin), d * (1 - margin)))
        a = float(rng.uniform(0.5, 2.0))
        out.append(MatrixWeight(
            "power_radial", d, 1, matrix=np.array([[a]]),
            gamma=np.array([[gamma]]),
            weight_id=f"rand-scalar-{seed}-{k}",
        ))
    return out


def function_battery(base: Cube, resolution: int, n: int, seed: int,
                     kinds=("indicator", "gauss", "trig", "bandlimited"),
                     count_per_kind: int = 2):
    """Deterministic battery of C^n lattice functions on `base`.

    Kinds: sub-cube indicators with random sign vectors, tensor
    Gaussians, trigonometric fields, and random band-limited fields.
    """
    rng = rng_for(seed, stream=3)
    d = base.dim
    lo = np.array([float(a) for a in base.low])
    side = float(base.side)
    out = []
    for kind in kinds:
        for k in range(count_per_kind):
            if kind == "indicator":
                c0 = lo + rng.uniform(0.1, 0.5, d) * side
                width = rng.uniform(0.2, 0.4) * side
                sign = rng.choice([-1.0, 1.0], n)

                def fn(X, c0=c0, width=width, sign=sign):
                    inside = np.all(
                        (X >= c0) & (X < c0 + width), axis=1
                    )
                    return inside[:, None] * sign[None, :]
            elif kind == "gauss":
                c0 = lo + rng.uniform(0.25, 0.75, d) * side
                s = rng.uniform(0.08, 0.2) * side
                amp = rng.standard_normal(n)

                def fn(X, c0=c0, s=s, amp=amp):
                    g = np.exp(-np.sum((X - c0) ** 2, axis=1) / (2 * s**2))
                    return g[:, None] * amp[None, :]
            elif kind == "trig":
                freq = rng.integers(1, 4, size=(n, d))
                phase = rng.uniform(0, 2 * np.pi, size=n)

                def fn(X, freq=freq, phase=phase):
                    t = 2 * np.pi * (X - lo) / side
                    return np.stack(
                        [np.sin(t @ freq[i] + phase[i])
                         for i in range(n)], axis=1
                    )
            else:  # bandlimited
                nmodes = 4
                freq = rng.integers(1, 5, size=(nmodes, d))
                coef = rng.standard_normal((nmodes, n)) / nmodes

                def fn(X, freq=freq, coef=coef):
                    t = 2 * np.pi * (X - lo) / side
                    acc = np.zeros((len(X), coef.shape[1]))
                    for m in range(len(freq)):
                        acc += np.cos(t @ freq[m])[:, None] * coef[m]
                    return acc
            gf = GridFunction.from_callable(base, resolution, fn)
            gf.function_id = f"{kind}-{seed}-{k}"
            out.append(gf)
    return out
