"""Fully implicit oil/water/polymer reservoir simulator."""
