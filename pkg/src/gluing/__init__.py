"""Partition of unity and center-of-mass gluing of the local maps"""
