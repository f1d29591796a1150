# GnarLab Core Module
