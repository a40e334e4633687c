"""DORE simulator package"""
