import numpy as np
import pytest

from fanodyn import (ConstantSchedule, Mode, ModelSpec, QuenchSchedule,
                     Reservoir, Statistics, uniform_band)


def single_mode_spec(v=0.5, eps=0.0, eps_b=0.0, statistics=Statistics.FERMION):
    """One level, one bath mode, constant parameters."""
    return ModelSpec(
        statistics=statistics, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[eps]], dtype=complex)),
        reservoirs=(Reservoir(modes=(
            Mode(eps=ConstantSchedule(float(eps_b)),
                 coupling=ConstantSchedule(np.array([v], dtype=complex))),)),),
    )


def band_spec(n_modes=40, rate=0.5, eps=0.2, e_min=-4.0, e_max=4.0,
              statistics=Statistics.FERMION):
    return ModelSpec(
        statistics=statistics, n_levels=1,
        eps_sys=ConstantSchedule(np.array([[eps]], dtype=complex)),
        reservoirs=(uniform_band(n_modes, e_min, e_max, rate),),
    )


def quenched_band_spec(n_modes=6, rate=0.3, eps_prep=0.3, eps_run=-0.3,
                       e_min=-2.0, e_max=2.0, statistics=Statistics.FERMION):
    """Level prepared at eps_prep, run at eps_run (jump at t0): the thermal
    preparation and the dynamics see different Hamiltonians while every
    on-run schedule stays constant."""
    eps = QuenchSchedule(initial=np.array([[eps_prep]], dtype=complex),
                         times=(0.0,),
                         values=(np.array([[eps_run]], dtype=complex),))
    return ModelSpec(statistics=statistics, n_levels=1, eps_sys=eps,
                     reservoirs=(uniform_band(n_modes, e_min, e_max, rate),))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
