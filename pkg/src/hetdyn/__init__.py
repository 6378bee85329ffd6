"""Heteroclinic targets, neural-field no-cycle certificates, and learned approximations."""

__version__ = "0.1.0"

_SUBMODULES = ("core", "lv", "nfield", "integrate", "approx", "analysis", "pipeline",
               "svgplot", "cli")


def __getattr__(name):
    # keep import light so the CLI can cap thread pools before numpy loads
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
