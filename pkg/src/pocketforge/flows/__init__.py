"""Flow matching: discrete flows, objectives, training and sampling"""
