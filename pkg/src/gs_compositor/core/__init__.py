"""Ambient infrastructure: logging, errors, file and concurrency helpers"""
