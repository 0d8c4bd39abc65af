"""astbridge: cross-language code embeddings from unified ASTs.

Parse trees from any language land in one interchange format, get mapped to a
shared universal label set, are structurally enhanced, and are encoded in
pairs by a graph matching network into a common semantic space used for
cross-language clone detection and code retrieval.
"""

__version__ = "0.1.0"

from .estimators import AstEnhancer, GmnCloneDetector, GmnRetriever, LabelUnifier  # noqa: E402,F401
