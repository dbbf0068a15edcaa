"""Finite-dimensional Euclidean estimates: bases, Gram matrices, isometry defects"""
