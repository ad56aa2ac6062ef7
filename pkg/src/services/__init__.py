# Pipeline and rate services