"""TerraSense: lateral-force terramechanics surrogate, grid soil-contact oracle and
sinkage-exponent estimation for wheeled vehicles on deformable terrain."""

__version__ = "1.0.0"
