"""Cross-domain glyph recognition via adversarial and consistency-based
unsupervised domain adaptation, self-contained at desk scale."""

__version__ = "0.1.0"
