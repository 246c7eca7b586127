"""Music style-transfer workbench.

A bidirectional-Transformer music language model with a convolutional
autoregressive pitch head, Gibbs-sampling style transfer, and an
instrumented editing-test apparatus (session service + analytics).
"""

__version__ = "0.1.0"
