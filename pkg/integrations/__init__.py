# GnarLab Integrations
