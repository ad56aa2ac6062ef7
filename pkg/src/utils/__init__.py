# Utility functions