"""Numerical verification of the comparison estimates"""
