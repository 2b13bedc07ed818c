"""Continual learning over synthetic CSI sensing domains.

Subpackages: sim (channel and domain generation), preprocess (CSI to model
input), model (transformer discriminator with hand-written gradients), train
(losses, robustness-enhanced updates, regularizers), coreset (exemplar
selection and distilled labels), harness (sequential protocol, benchmarks,
metrics, persistence), cli (command-line entry points).
"""

__version__ = "0.1.0"
