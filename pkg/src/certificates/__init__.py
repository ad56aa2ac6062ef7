# Drift, small-set and Harris certificates