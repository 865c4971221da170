"""The eight grid moves shared by the environment and all planners."""

# N, NE, E, SE, S, SW, W, NW; y grows downwards (row 0 is north).
MOVES = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))
ACTION_NAMES = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
N_ACTIONS = len(MOVES)
