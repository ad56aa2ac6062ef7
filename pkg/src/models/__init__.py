# Coefficients, kernels and hypotheses