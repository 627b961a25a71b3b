"""Structures, molecules, vocabularies and curation"""
