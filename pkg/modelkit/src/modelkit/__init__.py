"""Training kit for the conduct-document classifier.

Builds NLI pairs from the annotated reference corpus, fine-tunes low-rank
adapters on the seq2seq backbone, and exports both the classifier and the
sentence encoder to the portable format the measurement pipeline loads.
"""

__version__ = "0.1.0"
