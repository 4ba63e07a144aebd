"""neuroloop: a closed-loop adaptive learning engine on synthetic EEG.

Pipeline: synthetic acquisition -> preprocessing (IIR + spatial filters) ->
feature extraction (band power, Hjorth, AR, wavelets) -> confusion detection
(LDA + threshold + debounce) -> lesson session control, with a framed TCP /
HTTP service and an operator CLI on top.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
