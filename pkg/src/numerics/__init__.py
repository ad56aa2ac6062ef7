# Flow, grids, semigroup and eigen solvers