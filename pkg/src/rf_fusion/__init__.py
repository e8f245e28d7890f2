"""Device-free through-wall localization fusing RSS tomographic imaging with
UWB bistatic ranging."""

__version__ = "0.1.0"
