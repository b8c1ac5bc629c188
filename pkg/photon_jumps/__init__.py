# Core simulation package: field jumps, probe atoms, detection, decoding and analysis.
# Import submodules directly, e.g.:
# from photon_jumps.field_dynamics import BathParams, sample_trajectory

__version__ = "0.3.0"
