"""Model Riemannian manifolds, curvature and the exponential map"""
