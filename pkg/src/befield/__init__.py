"""Weighted curvature, Bakry-Emery tensors and scalar-coupled field equations on coordinate charts."""
