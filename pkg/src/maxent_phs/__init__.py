"""Maximum-entropy equilibrium and port-Hamiltonian thermodynamics on enumerable microstate spaces."""
