__author__ = "PACnav contributors"
__email__ = "pacnav-dev@users.noreply.github.com"
__license__ = "Apache2.0"
__version__ = "0.1.0"
__summary__ = "PACnav is a research-focused toolkit for " \
    "sampling-based stochastic NMPC with a learned, lidar-conditioned terminal value function."
