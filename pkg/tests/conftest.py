"""Shared helpers for the test suite."""

import numpy as np

from suslov.algebra import SkewMatrix
from suslov.model import BodyState

# reference integrator tolerances used across the conservation suites
RTOL = 1e-10
ATOL = 1e-12


def random_skew(rng, n):
    return SkewMatrix(rng.normal(size=(n, n)))


def random_unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def random_canonical_state(rng, n, speed=1.0):
    """State satisfying the canonical constraints: only the Omega_in column."""
    col = speed * rng.normal(size=n - 1)
    mat = np.zeros((n, n))
    mat[: n - 1, n - 1] = col
    mat[n - 1, : n - 1] = -col
    return BodyState(SkewMatrix(mat), random_unit(rng, n))


def canonical_state(col, gamma):
    col = np.asarray(col, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size
    mat = np.zeros((n, n))
    mat[: n - 1, n - 1] = col
    mat[n - 1, : n - 1] = -col
    return BodyState(SkewMatrix(mat), gamma)


def state_from_vec3(omega_vec, gamma):
    """3D state from the vector form of the angular velocity."""
    from suslov.algebra import vector_to_skew

    return BodyState(vector_to_skew(omega_vec), np.asarray(gamma, dtype=float))


def state_with_sizable_integrals(rng, spec, integrals, min_abs=0.05, speed=0.7):
    """Random canonical state whose integral values are all well away from
    zero; relative drift is meaningless against a vanishing reference."""
    for _ in range(100):
        state = random_canonical_state(rng, spec.n, speed=speed)
        vals = integrals.evaluate(state)
        if all(abs(v) >= min_abs for v in vals.values()):
            return state
    raise RuntimeError("could not draw a state with sizable integrals")
