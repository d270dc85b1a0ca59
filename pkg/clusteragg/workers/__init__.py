"""
Background execution of experiment matrices.
"""
