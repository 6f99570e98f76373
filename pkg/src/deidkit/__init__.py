"""De-identification toolkit for Dutch clinical text: rules, CRF, evaluation, surrogates."""

__version__ = "0.1.0"
