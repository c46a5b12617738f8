"""Plug-and-play flow-matching restoration toolkit.

Submodules: numerics (tensors, RNG, convolution), degrade (forward operators
and data fidelity), flowfield (vector fields and the denoiser), fmtrain
(conditional flow-matching training), schedule (step schedules and bound
certificates), solver (restoration iterations), sdelab (continuous-limit
simulation and certificate checks), metrics / netpbm / corpus / harness / cli
(evaluation, image I/O, synthetic data, experiment driver, command line).
"""

__version__ = "0.1.0"
