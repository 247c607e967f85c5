"""Training, evaluation, gradient checking and ablation tooling."""
