"""
Test suite for Cancellations SOP Processor
"""
