"""Infrastructure layer: frame codec, local bus, TCP runtime."""
