"""Measurement toolkit for video-game conduct documents.

Pipeline stages: catalog crawl and filtering, conduct-page discovery and
validation, HTML sanitization and segmentation, 17-label safety-topic
classification, contextual entity extraction, corpus-relative specificity
scoring, and quantitative analytics.
"""

__version__ = "0.1.0"
