__author__ = "fractal-ae contributors"
__version__ = "0.1.0"
