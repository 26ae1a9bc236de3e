"""Training, evaluation, experiment grids and the command-line interface."""
