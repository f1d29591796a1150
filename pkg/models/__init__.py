# GnarLab Models
