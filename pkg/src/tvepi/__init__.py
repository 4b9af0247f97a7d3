"""Total-variation regularized inference of time-varying epidemic dynamics."""
