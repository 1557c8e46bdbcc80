"""Mixed non-Hermitian / Lindblad open-system dynamics."""
