"""File formats for images, documents and loss curves"""
