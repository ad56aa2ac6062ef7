# Command-line handlers