"""signweave: compose isolated sign-motion clips into continuous sentence-level
3D motion and evaluate the results with alignment, distributional, and
retrieval-based metrics."""

__version__ = "0.1.0"
