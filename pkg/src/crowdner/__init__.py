"""crowdner: character-level NER trained on noisy multi-annotator corpora."""

__version__ = "0.1.0"
