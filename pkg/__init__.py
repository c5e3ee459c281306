"""
FedEPM: a desk-scale simulator of federated learning with an exact elastic-net penalty,
Laplace-perturbed uploads and partial participation, compared against SFedAvg and SFedProx.
"""
