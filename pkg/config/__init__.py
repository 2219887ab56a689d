"""
Config Package
==============
Environment-driven settings and text templates for reports and plots.
"""
