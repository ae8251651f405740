from ._gacnet import *  # noqa: F401,F403
from ._gacnet import __doc__  # noqa: F401
