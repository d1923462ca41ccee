"""Random walks in Levy environments: samplers, valley renewal structure and limit checks."""
