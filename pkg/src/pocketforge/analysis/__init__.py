"""Evaluation metrics and reports"""
