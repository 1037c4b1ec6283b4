"""
URLLC HetNet toolkit: joint user offloading and resource allocation
"""
__version__ = "2.0.0"
