from ._tunnelprof import *  # noqa: F401,F403
