"""Self-supervised multi-scale terrain embeddings.

Trains an encoder/decoder pair on a super-resolution pretext task over
elevation patches (optionally with a conditional adversarial loss), and
provides the evaluation experiments, retrieval index, HTTP service and CLI
around it.
"""

__version__ = "0.1.0"
