"""Python interface to the cMPS tomography core.

The heavy lifting lives in the `_core` pybind11 module built by CMake; this
package re-exports its surface. Point PYTHONPATH at both this directory and
the CMake build directory containing `_core.*.so`.
"""

from _core import *  # noqa: F401,F403
from _core import __doc__ as _core_doc

__doc__ = (__doc__ or "") + "\n\n" + (_core_doc or "")
