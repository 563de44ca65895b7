# Reifenberg laboratory: multiscale flatness statistics and parametrization audits
__version__ = "0.4.0"
