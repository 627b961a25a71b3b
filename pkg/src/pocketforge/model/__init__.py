"""Networks: encoders, trunk, heads and checkpoints"""
