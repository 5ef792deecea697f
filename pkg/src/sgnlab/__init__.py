"""Stochastic Gauss-Newton with Levenberg-Marquardt damping for deep feedforward networks."""
