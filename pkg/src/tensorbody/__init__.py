"""Tensorial convex bodies: tensor products, tensorial retractions and slices."""
