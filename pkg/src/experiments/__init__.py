"""Experiment configuration, pipeline stages and command-line interface"""
