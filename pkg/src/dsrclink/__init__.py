"""Software QPSK link: transmit chain, channel simulator and recovery loops."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
