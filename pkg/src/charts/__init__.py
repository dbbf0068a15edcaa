"""Local maps between the manifolds built from a net and a correspondence"""
