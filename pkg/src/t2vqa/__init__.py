"""Text-to-video quality assessment workbench.

Subpackages cover the full pipeline: manifest data model, subjective
score normalization, prompt curation, the dual-branch scoring model,
training, the correlation evaluation protocol, descriptive analysis,
and a rating-collection HTTP service.
"""

__version__ = "0.1.0"
