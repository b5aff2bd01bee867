"""Kernel mean-field theory of trained recurrent and deep networks.

Thin re-export of the compiled extension; every public name lives in
``kmft._kmft`` and is documented there.
"""

from ._kmft import *  # noqa: F401,F403
from ._kmft import __doc__ as _core_doc  # noqa: F401
from ._kmft import __version__  # noqa: F401
