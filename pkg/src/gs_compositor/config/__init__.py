"""Configuration models, numeric constants and validators"""
