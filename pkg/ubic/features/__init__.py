"""Discovery stages: data, denoising, weak-form library, subsets, posterior, selection, metrics."""
