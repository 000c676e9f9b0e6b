"""todalab: a desk-scale lattice laboratory for vector-valued log-correlated
field theory.

Subpackages cover exact root-system data (`rootdata`), discrete surfaces and
Green matrices (`surface`), Gaussian free-field sampling (`fields`),
multiplicative chaos (`chaos`), correlator estimation (`correlator`), and the
symbolic current algebra (`walg`).
"""

__version__ = "0.1.0"

CONVENTIONS = {
    "chaos_normalization": "lattice-Wick",
    "partition_normalization": "omitted",
}
