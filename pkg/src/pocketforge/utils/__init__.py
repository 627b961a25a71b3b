"""Console formatting helpers"""
