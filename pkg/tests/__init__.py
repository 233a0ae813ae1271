"""Test suite for depth2flow"""
