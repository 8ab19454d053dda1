"""hdtk: subspace + adaptive generative-prior reconstruction at desk scale.

Submodules are imported explicitly (``from hdtk import recon``) rather than
re-exported here, so that the CLI can configure thread limits before numpy
is loaded.
"""

__version__ = "0.1.0"
