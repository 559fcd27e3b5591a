# test package for pyhaar_cascade
