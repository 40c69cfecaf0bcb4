"""Control plane: failure detection, restarts and repartitioning."""
