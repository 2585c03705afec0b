"""Simulation of time-ordering effects in pulsed quantum frequency conversion.

Submodules:

* ``domain``: parameter records, analytic scalar functions, grids and photons
* ``coupling``: first-order joint conversion amplitude and the coupling m(t)
* ``propagate``: exact one-photon propagator, Magnus terms, effective JCA
* ``schmidt``: Schmidt decomposition, conversion probabilities, overlaps
* ``experiments``: strength sweeps, cascades, pump design
* ``cli``: command-line front end
"""

from .coupling import ConvergenceError, GridCoverageError, JcaMatrix, build_j1, integrate_coupling
from .domain import (DeviceParams, FrequencyGrid, PhysicalParams, PmfKind, WavePacket,
                     default_grids, epsilon_from_physical, matched_input_photon, mu_parameters)
from .experiments import (CascadeSpec, InfeasibleDesignError, SweepResult, cascade_unitary,
                          design_mu_zero, sweep_efficiency, sweep_schmidt)
from .propagate import (EffectiveJca, MagnusGenerators, OneParticleUnitary, effective_jca,
                        magnus_generators, time_ordered_unitary)
from .schmidt import (SchmidtData, conversion_probability, mode_overlaps, schmidt_decompose,
                      transform_photon)

__version__ = "0.1.0"
