import numpy as np
import pytest

from periodic_hmm import DecayLaw, FastSystem, FourierForcing, load_preset


def constant_system(lam=1.0, cos=((0.0,),), sin=((),), u_max=2.0):
    """Scalar system with ``lambda(u) = lam`` and Fourier forcing."""
    return FastSystem((DecayLaw((lam,), lam, 0.0, u_max),), FourierForcing(cos, sin), (1.0,))


def unforced_system(a=1.0, b=1.0, u_max=2.0):
    """``lambda(u) = a + b u``, ``f = 0``."""
    return FastSystem((DecayLaw.affine(a, b, u_max),), FourierForcing(((0.0,),), ((),)), (1.0,))


def exact_sine_periodic(lam, t):
    """Periodic solution of ``v' + lam v = sin(2 pi t)``."""
    w = 2 * np.pi
    return (lam * np.sin(w * t) - w * np.cos(w * t)) / (lam**2 + w**2)


@pytest.fixture
def scalar():
    return load_preset("scalar-default")


@pytest.fixture
def modal():
    return load_preset("modal-default")
