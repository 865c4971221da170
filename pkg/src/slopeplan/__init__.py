"""Distance + energy path planning on 2.5D terrain."""
