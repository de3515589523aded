"""Unsupervised oil-slick detection for hyperspectral cubes.

The pipeline screens out severely noisy bands, reduces the spectral dimension
with kernel PCA, scores per-pixel isolation probability with an isolation
forest, clusters the scores into pseudo labels, trains an RBF SVM on a small
stratified sample, and refines the resulting probability map with a
random-walker smoother before thresholding.
"""

from .pipeline import PipelineConfig, RunArtifacts, run, run_ablation

__all__ = ["PipelineConfig", "RunArtifacts", "run", "run_ablation"]
__version__ = "0.1.0"
