"""Pipeline orchestration: fitting, training, harmonization and evaluation"""
