"""glyphpipe: hieroglyph plate images to English.

Grid preprocessing, glyph segmentation, Gardiner-code classification,
transliteration, and transformer translation, with a CLI front end.
"""

__version__ = "0.1.0"

from .errors import GlyphPipeError

__all__ = ["GlyphPipeError", "__version__"]
