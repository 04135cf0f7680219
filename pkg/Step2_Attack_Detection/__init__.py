from .aco_detection import ClusterView, detect
