"""isinglab: simulation and exact verification of Ising Gibbs samplers.

Library layout:

* ``graphs``    -- graphs, instances, random generators, balls
* ``exact``     -- brute-force distribution, spectrum, mixing times
* ``saw``       -- self-avoiding-walk trees and spatial-mixing bounds
* ``dynamics``  -- the sampler, monotone grand coupling, censoring
* ``cutwidth``  -- exact cut-width, tree bounds, Galton-Watson statistics
* ``certify``   -- Vol/LM/SM condition checks and certified mixing bounds
* ``cli``       -- the ``isinglab`` command-line harness
"""

from .graphs import (
    Graph,
    IsingInstance,
    Ball,
    build_instance,
    ball,
    gen_erdos_renyi,
    gen_random_regular,
    gen_galton_watson_poisson,
    spanning_tree_bfs,
    read_instance,
    write_instance,
)
from .errors import SizeCapError, InstanceFormatError, CertificationRefused

__version__ = "0.1.0"
