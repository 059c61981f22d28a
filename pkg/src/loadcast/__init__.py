"""Web workload forecasting with time-delay neural networks.

Subpackages are organised by pipeline stage: ``ingest`` turns trace logs into
request-count series, ``series`` builds supervised datasets, ``network`` and
``training`` hold the model and its trainers, ``simulate`` runs open/closed
loop prediction and metrics, and ``experiments`` encodes the case catalog.
"""

__version__ = "0.1.0"

DEFAULT_SEED = 42
