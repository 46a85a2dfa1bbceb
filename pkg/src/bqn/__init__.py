"""Binarized Q-network toolkit.

Subpackages:

* ``bqn.kernels``   -- bit-packing / XNOR-popcount kernels (compiled or numpy)
* ``bqn.core``      -- bit tensors, network definitions, forward passes, model files
* ``bqn.training``  -- straight-through-estimator gradients and RMSProp updates
* ``bqn.rl``        -- pixel toy environments, replay buffer, Q-learning loop
* ``bqn.verifier``  -- interval bounds, MIP-style encoding, branch-and-bound solver
* ``bqn.cli``       -- command-line entry points
"""

__version__ = "0.1.0"
