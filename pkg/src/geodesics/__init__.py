"""Logarithm map, distance, parallel transport and Jacobi fields"""
