"""
Estimation, testing and benchmark services
"""
