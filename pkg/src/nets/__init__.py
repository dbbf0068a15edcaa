"""Epsilon-nets and Gromov-Hausdorff approximations"""
